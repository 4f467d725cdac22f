"""Canonicalizer: alias unification, argument binding, keyword
extraction spans, and module-class harvesting."""

from __future__ import annotations

import ast
import inspect

import pytest

from frameport.canon import (
    CALLABLE,
    PARAMETER,
    ApiKeyword,
    ApiSignature,
    KeywordRegistry,
    SignatureDatabase,
    SourceUnit,
    bind_arguments,
    canonicalize,
    extract_keywords,
    extract_module_classes,
)
from frameport.errors import (
    ArityError,
    ConfigError,
    DuplicateKeywordError,
    ParseError,
    UnknownCallableError,
)
from frameport.pipeline import default_database

PT = default_database("pytorch")
KS = default_database("keras")


def canon(text: str, db=PT) -> str:
    return canonicalize(SourceUnit(text, db.framework), db).text


def test_positional_arguments_become_keywords():
    out = canon("import torch.nn as nn\nfc = nn.Linear(128, 64)\n")
    assert out == "import torch.nn as nn\nfc = nn.Linear(in_features=128, out_features=64)"


def test_keyword_arguments_are_reordered_to_signature_order():
    out = canon("import torch.nn as nn\nfc = nn.Linear(out_features=64, in_features=128)\n")
    assert out.endswith("nn.Linear(in_features=128, out_features=64)")


def test_qualified_use_contracts_to_short_alias():
    out = canon("import torch\nfc = torch.nn.Linear(128, 64)\n")
    assert out == "import torch\nfc = nn.Linear(in_features=128, out_features=64)"


def test_callable_alias_and_path_alias_resolve():
    out = canon("import tensorflow as tf\np = tf.keras.layers.MaxPool2D(2)\n", KS)
    assert out == "import tensorflow as tf\np = layers.MaxPooling2D(pool_size=2)"


def test_from_import_is_rewritten_to_canonical_module_import():
    out = canon("from keras.layers import Dense\nd = Dense(10, activation='relu')\n", KS)
    assert out == (
        "import tensorflow.keras.layers as layers\n"
        "d = layers.Dense(units=10, activation='relu')"
    )


def test_canonical_import_spelling_is_preserved():
    src = "from torch import nn\nx = nn.ReLU()"
    assert canon(src) == src


def test_variadic_callable_keeps_positional_arguments():
    src = "import torch.nn as nn\ns = nn.Sequential(nn.ReLU(), nn.Flatten())"
    assert canon(src) == src


def test_star_arguments_are_left_alone():
    src = "import torch.nn as nn\nfc = nn.Linear(*args)"
    assert canon(src) == src


def test_canonicalize_is_idempotent():
    sources = [
        "import torch.nn as nn\nfc = nn.Linear(128, 64)\n",
        "import torch\nfc = torch.nn.Linear(128, 64)\n",
        "from keras.layers import Dense\nd = Dense(10)\n",
        "import tensorflow as tf\np = tf.keras.layers.MaxPool2D(2)\n",
        "x = 1\n",
    ]
    for src in sources:
        db = KS if "keras" in src or "tf" in src else PT
        once = canon(src, db)
        assert canon(once, db) == once, src


def test_empty_module_stays_empty():
    assert canon("") == ""
    assert canon("\n\n") == ""


def test_framework_mismatch_is_rejected():
    with pytest.raises(ConfigError):
        canonicalize(SourceUnit("x = 1", "keras"), PT)


def test_syntax_error_raises_parse_error():
    with pytest.raises(ParseError):
        canon("def broken(:\n")


def test_strict_mode_rejects_unknown_framework_callables():
    src = "import torch.nn as nn\nx = nn.Bogus(3)\n"
    assert canon(src) == src.rstrip("\n")  # lenient: left as-is
    with pytest.raises(UnknownCallableError):
        canonicalize(SourceUnit(src, "pytorch"), PT, strict=True)


def test_too_many_positionals_raise_arity_error():
    with pytest.raises(ArityError):
        canon("import torch.nn as nn\nfc = nn.Linear(1, 2, True, 4)\n")


def test_positional_and_keyword_collision_raises():
    with pytest.raises(DuplicateKeywordError):
        canon("import torch.nn as nn\nfc = nn.Linear(128, in_features=3)\n")


def test_bind_arguments_matches_inspect_signature_binding():
    sig = PT.signatures["nn.Conv2d"]
    ns: dict = {}
    spelled = [
        p if i < sig.required_count else f"{p}=None"
        for i, p in enumerate(sig.parameters)
    ]
    exec(f"def probe({', '.join(spelled)}): pass", ns)
    call = ast.parse("f(3, 16, 3, padding=1)").body[0].value
    bound = bind_arguments(call, sig)
    oracle = inspect.signature(ns["probe"]).bind(3, 16, 3, padding=1)
    assert [kw.arg for kw in bound.keywords] == list(oracle.arguments)
    assert [ast.literal_eval(kw.value) for kw in bound.keywords] == list(
        oracle.arguments.values()
    )


def test_unknown_keywords_keep_relative_order_after_known_ones():
    sig = ApiSignature("f", parameters=("a", "b"))
    call = ast.parse("f(zz=1, b=2, aa=3, a=4)").body[0].value
    bound = bind_arguments(call, sig)
    assert [kw.arg for kw in bound.keywords] == ["a", "b", "zz", "aa"]


def test_extract_keywords_spans_and_call_ids():
    text = (
        "import torch.nn as nn\n\n"
        "class Net(nn.Module):\n\n"
        "    def __init__(self):\n"
        "        super().__init__()\n"
        "        self.fc = nn.Linear(in_features=4, out_features=2)\n\n"
        "    def forward(self, x):\n"
        "        return self.fc(x)\n"
    )
    unit = canonicalize(SourceUnit(text, "pytorch"), PT)
    occs = extract_keywords(unit, PT)
    data = unit.text.encode("utf-8")
    assert [(o.keyword.kind, o.keyword.text) for o in occs] == [
        (CALLABLE, "nn.Linear"),
        (PARAMETER, "in_features"),
        (PARAMETER, "out_features"),
    ]
    for occ in occs:
        assert data[occ.span[0]:occ.span[1]].decode() == occ.keyword.text
        a, b = occ.span_in_context
        assert occ.context.encode()[a:b].decode() == occ.keyword.text
    assert len({o.call_id for o in occs}) == 1
    assert all(o.keyword.owner == "nn.Linear" for o in occs[1:])
    # context is the innermost enclosing definition
    assert occs[0].context.startswith("def __init__")
    assert [o.span for o in occs] == sorted(o.span for o in occs)


def test_extract_keywords_separate_calls_get_distinct_ids():
    text = "import torch.nn as nn\na = nn.ReLU()\nb = nn.ReLU()\n"
    unit = canonicalize(SourceUnit(text, "pytorch"), PT)
    occs = extract_keywords(unit, PT)
    assert [o.keyword.text for o in occs] == ["nn.ReLU", "nn.ReLU"]
    assert occs[0].call_id != occs[1].call_id


def test_extract_keywords_skips_unknown_parameter_names():
    text = "import torch.nn as nn\nfc = nn.Linear(in_features=4, wat=1)\n"
    occs = extract_keywords(SourceUnit(text, "pytorch"), PT)
    assert [o.keyword.text for o in occs] == ["nn.Linear", "in_features"]


def test_extract_module_classes_splits_by_framework():
    text = (
        "import torch.nn as nn\n"
        "from tensorflow.keras import layers\n\n"
        "class A(nn.Module):\n    def forward(self, x):\n        return x\n\n"
        "class B(layers.Layer):\n    def call(self, x):\n        return x\n\n"
        "class C:\n    pass\n"
    )
    units = extract_module_classes(text, {"pytorch": PT, "keras": KS}, origin="m.py")
    got = {(u.framework, u.origin) for u in units}
    assert got == {("pytorch", "m.py:A"), ("keras", "m.py:B")}
    for u in units:
        assert u.text.startswith("class ")
        # each unit canonicalizes standalone
        canonicalize(u, PT if u.framework == "pytorch" else KS)


def test_extract_module_classes_tolerates_bad_files():
    assert extract_module_classes("def broken(:\n", {"pytorch": PT}) == []


def test_registry_interns_and_numbers_in_first_seen_order():
    reg = KeywordRegistry()
    a = reg.register(ApiKeyword("pytorch", CALLABLE, "nn.ReLU"))
    b = reg.register(ApiKeyword("pytorch", PARAMETER, "p", owner="nn.Dropout"))
    a2 = reg.register(ApiKeyword("pytorch", CALLABLE, "nn.ReLU"))
    assert (a.id, b.id) == (0, 1)
    assert a2.id == 0 and len(reg) == 2
    assert [k.id for k in reg.keywords()] == [0, 1]


def test_keyword_validation():
    with pytest.raises(ConfigError):
        ApiKeyword("pytorch", "verb", "x")
    with pytest.raises(ConfigError):
        ApiKeyword("pytorch", PARAMETER, "p")  # parameters need an owner
    with pytest.raises(ConfigError):
        ApiKeyword("pytorch", CALLABLE, "f", owner="g")


def test_signature_database_validation_and_round_trip(tmp_path):
    with pytest.raises(ConfigError):
        ApiSignature("f", parameters=("a", "a"))
    with pytest.raises(ConfigError):
        ApiSignature("f", parameters=("a",), required_count=2)
    with pytest.raises(ConfigError):
        SignatureDatabase("x", {}, [ApiSignature("f"), ApiSignature("f")])
    with pytest.raises(ConfigError):
        SignatureDatabase("x", {"a.b": "s", "c.d": "s"}, [])
    path = tmp_path / "db.json"
    PT.save(path)
    back = SignatureDatabase.load(path)
    assert back.to_dict() == PT.to_dict()
    with pytest.raises(ConfigError):
        SignatureDatabase.load(tmp_path / "missing.json")


def test_path_arithmetic():
    assert KS.normalize_path("keras.layers.Dense") == "tensorflow.keras.layers.Dense"
    assert KS.contract_path("tensorflow.keras.layers.Dense") == "layers.Dense"
    assert KS.contract_path("numpy.array") is None
    assert KS.resolve_name("layers.MaxPool2D") == "layers.MaxPooling2D"
    assert PT.looks_framework_qualified("nn.Linear")
    assert not PT.looks_framework_qualified("np.zeros")
