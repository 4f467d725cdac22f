"""Source-to-source transpiler between deep-learning framework dialects.

The pipeline separates two concerns: program *skeletons* (class/function
structure, control flow) are translated by a few-shot completion backend,
while framework-specific *API keywords* (callable names and their parameter
names) are translated through a dictionary learned from unlabeled corpora.
"""

from frameport.errors import FrameportError
from frameport.pipeline import TranspileResult, transpile_source, transpile_unit

__all__ = [
    "FrameportError",
    "TranspileResult",
    "transpile_source",
    "transpile_unit",
]

__version__ = "0.1.0"
