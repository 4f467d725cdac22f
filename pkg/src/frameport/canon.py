"""Alias unification, argument binding, and API keyword extraction.

Canonical form: every recognized call uses its framework's canonical
callable name with keyword-only arguments listed in signature order, and
import statements establish the canonical short alias of each module.
The rendering is whatever ``ast.unparse`` produces, which makes a
canonicalized unit a fixed point of :func:`canonicalize`.
"""

from __future__ import annotations

import ast
import itertools
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

from frameport.errors import (
    ArityError,
    ConfigError,
    DuplicateKeywordError,
    ParseError,
    UnknownCallableError,
)

log = logging.getLogger(__name__)

CALLABLE = "callable"
PARAMETER = "parameter"

# Base-class spellings (canonical short form) that mark a class as a
# framework module definition.
DEFAULT_BASE_CLASSES: dict[str, tuple[str, ...]] = {
    "pytorch": ("nn.Module",),
    "keras": ("layers.Layer", "keras.Model"),
    "mxnet": ("nn.Block", "nn.HybridBlock"),
}


@dataclass(frozen=True)
class SourceUnit:
    """One piece of framework-dialect source code."""

    text: str
    framework: str
    origin: str = ""


@dataclass(frozen=True)
class ApiSignature:
    """A callable's canonical name and ordered parameter list."""

    canonical_name: str
    parameters: tuple[str, ...] = ()
    required_count: int = 0
    aliases: frozenset[str] = frozenset()
    # Variadic callables (container-style, e.g. sequential layer stacks)
    # accept arbitrary positional arguments and are exempt from binding.
    variadic: bool = False

    def __post_init__(self) -> None:
        if len(set(self.parameters)) != len(self.parameters):
            raise ConfigError(f"duplicate parameters in {self.canonical_name!r}")
        if not 0 <= self.required_count <= len(self.parameters):
            raise ConfigError(f"required_count out of range in {self.canonical_name!r}")
        if self.canonical_name in self.aliases:
            raise ConfigError(f"{self.canonical_name!r} lists itself as an alias")


@dataclass(frozen=True)
class ApiKeyword:
    """A vocabulary item: a callable name or a parameter name.

    ``id`` is the dense index assigned by a vocabulary; it does not take
    part in equality so the same keyword interns identically before and
    after ids are known.
    """

    framework: str
    kind: str
    text: str
    owner: str | None = None
    id: int = field(default=-1, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in (CALLABLE, PARAMETER):
            raise ConfigError(f"bad keyword kind {self.kind!r}")
        if self.kind == PARAMETER and not self.owner:
            raise ConfigError(f"parameter keyword {self.text!r} needs an owner")
        if self.kind == CALLABLE and self.owner is not None:
            raise ConfigError(f"callable keyword {self.text!r} cannot have an owner")

    def with_id(self, id: int) -> "ApiKeyword":
        return replace(self, id=id)


@dataclass(frozen=True)
class KeywordOccurrence:
    """One use of a keyword in canonicalized source.

    ``span`` is a byte range into the unit text (UTF-8); ``context`` is
    the enclosing class/function source with ``context_offset`` giving
    its byte position in the unit. Occurrences of a call and of its
    keyword arguments share ``call_id``. ``unit_ref`` optionally names
    the owning corpus unit as ``corpusid:unitid`` for external lookup.
    """

    keyword: ApiKeyword
    span: tuple[int, int]
    context: str
    context_offset: int = 0
    call_id: int = -1
    unit_ref: str = ""

    @property
    def span_in_context(self) -> tuple[int, int]:
        return (self.span[0] - self.context_offset, self.span[1] - self.context_offset)


class KeywordRegistry:
    """Interns keywords and assigns dense ids in first-seen order."""

    def __init__(self) -> None:
        self._by_key: dict[ApiKeyword, ApiKeyword] = {}

    def register(self, keyword: ApiKeyword) -> ApiKeyword:
        known = self._by_key.get(keyword)
        if known is None:
            known = keyword.with_id(len(self._by_key))
            self._by_key[keyword] = known
        return known

    def __len__(self) -> int:
        return len(self._by_key)

    def keywords(self) -> list[ApiKeyword]:
        return list(self._by_key.values())


def _split_prefixes(path: str) -> list[str]:
    """Dotted prefixes of ``path``, longest first."""
    parts = path.split(".")
    return [".".join(parts[:n]) for n in range(len(parts), 0, -1)]


class SignatureDatabase:
    """Read-only table of a framework's modules, callables, and parameters."""

    def __init__(
        self,
        framework: str,
        import_aliases: Mapping[str, str],
        signatures: Iterable[ApiSignature],
        path_aliases: Mapping[str, str] | None = None,
    ) -> None:
        self.framework = framework
        self.import_aliases = dict(import_aliases)
        self.path_aliases = dict(path_aliases or {})
        self.signatures: dict[str, ApiSignature] = {}
        for sig in signatures:
            if sig.canonical_name in self.signatures:
                raise ConfigError(f"duplicate signature {sig.canonical_name!r}")
            self.signatures[sig.canonical_name] = sig

        shorts = list(self.import_aliases.values())
        if len(set(shorts)) != len(shorts):
            raise ConfigError(f"{framework}: import alias short names collide")
        self._shorts = set(shorts)

        self._name_index: dict[str, str] = {
            name: name for name in self.signatures
        }
        for sig in self.signatures.values():
            for alias in sig.aliases:
                if self._name_index.get(alias, sig.canonical_name) != sig.canonical_name:
                    raise ConfigError(f"alias {alias!r} is ambiguous")
                self._name_index[alias] = sig.canonical_name

        for target in self.path_aliases.values():
            if self.normalize_path(target) != target:
                raise ConfigError(f"path alias target {target!r} is not canonical")

    # -- path arithmetic ------------------------------------------------

    def normalize_path(self, path: str) -> str:
        """Replace the longest known non-canonical module prefix."""
        for prefix in _split_prefixes(path):
            target = self.path_aliases.get(prefix)
            if target is not None:
                return target + path[len(prefix):]
        return path

    def contract_path(self, path: str) -> str | None:
        """Rewrite the longest known module prefix to its short alias."""
        for prefix in _split_prefixes(path):
            short = self.import_aliases.get(prefix)
            if short is not None:
                return short + path[len(prefix):]
        return None

    def resolve_name(self, dotted: str) -> str:
        """Resolve callable aliases on the longest matching prefix."""
        for prefix in _split_prefixes(dotted):
            canonical = self._name_index.get(prefix)
            if canonical is not None:
                return canonical + dotted[len(prefix):]
        return dotted

    def signature_for(self, dotted: str) -> ApiSignature | None:
        canonical = self._name_index.get(dotted)
        if canonical is None:
            return None
        return self.signatures[canonical]

    def looks_framework_qualified(self, dotted: str) -> bool:
        return dotted.split(".", 1)[0] in self._shorts

    # -- serialization --------------------------------------------------

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SignatureDatabase":
        signatures = [
            ApiSignature(
                canonical_name=entry["canonical_name"],
                parameters=tuple(entry.get("parameters", ())),
                required_count=int(entry.get("required_count", 0)),
                aliases=frozenset(entry.get("aliases", ())),
                variadic=bool(entry.get("variadic", False)),
            )
            for entry in doc.get("signatures", ())
        ]
        return cls(
            framework=doc["framework"],
            import_aliases=doc.get("import_aliases", {}),
            signatures=signatures,
            path_aliases=doc.get("path_aliases", {}),
        )

    def to_dict(self) -> dict:
        doc: dict = {
            "framework": self.framework,
            "import_aliases": dict(self.import_aliases),
            "signatures": [],
        }
        if self.path_aliases:
            doc["path_aliases"] = dict(self.path_aliases)
        for sig in self.signatures.values():
            entry: dict = {
                "canonical_name": sig.canonical_name,
                "aliases": sorted(sig.aliases),
                "parameters": list(sig.parameters),
                "required_count": sig.required_count,
            }
            if sig.variadic:
                entry["variadic"] = True
            doc["signatures"].append(entry)
        return doc

    @classmethod
    def load(cls, path: str | Path) -> "SignatureDatabase":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load signature database {path}: {exc}") from None
        return cls.from_dict(doc)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n",
            encoding="utf-8",
        )


# -- AST helpers ---------------------------------------------------------


def _dotted_name(node: ast.AST) -> str | None:
    """Return ``a.b.c`` for a pure Name/Attribute chain, else None."""
    parts: list[str] = []
    while isinstance(node, ast.Attribute):
        parts.append(node.attr)
        node = node.value
    if not isinstance(node, ast.Name):
        return None
    parts.append(node.id)
    return ".".join(reversed(parts))


def _make_chain(dotted: str) -> ast.expr:
    parts = dotted.split(".")
    node: ast.expr = ast.Name(id=parts[0], ctx=ast.Load())
    for attr in parts[1:]:
        node = ast.Attribute(value=node, attr=attr, ctx=ast.Load())
    return node


def _has_star_args(call: ast.Call) -> bool:
    return any(isinstance(a, ast.Starred) for a in call.args) or any(
        k.arg is None for k in call.keywords
    )


def _line_starts(data: bytes) -> list[int]:
    starts = [0]
    for i, byte in enumerate(data):
        if byte == 0x0A:
            starts.append(i + 1)
    return starts


def _node_span(node: ast.AST, starts: list[int]) -> tuple[int, int]:
    return (
        starts[node.lineno - 1] + node.col_offset,
        starts[node.end_lineno - 1] + node.end_col_offset,
    )


def _fix_empty_bodies(tree: ast.AST) -> None:
    for node in ast.walk(tree):
        if isinstance(node, ast.Module):
            continue  # an empty module is legal and unparses to ""
        body = getattr(node, "body", None)
        if isinstance(body, list) and not body:
            body.append(ast.Pass())


def _collect_bindings(tree: ast.AST, db: SignatureDatabase) -> dict[str, str]:
    """Map locally bound names to normalized module/callable paths."""
    bindings: dict[str, str] = {}
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            for alias in node.names:
                if alias.asname:
                    bindings[alias.asname] = db.normalize_path(alias.name)
                else:
                    root = alias.name.split(".", 1)[0]
                    bindings[root] = db.normalize_path(root)
        elif isinstance(node, ast.ImportFrom):
            if node.level or node.module is None:
                continue
            for alias in node.names:
                if alias.name == "*":
                    continue
                path = db.normalize_path(f"{node.module}.{alias.name}")
                bindings[alias.asname or alias.name] = path
    for module_path, short in db.import_aliases.items():
        bindings.setdefault(short, module_path)
    return bindings


class _Rewriter(ast.NodeTransformer):
    """Single canonicalization pass: imports, name uses, argument binding."""

    def __init__(self, db: SignatureDatabase, bindings: dict[str, str], strict: bool):
        self.db = db
        self.bindings = bindings
        self.strict = strict
        self.emitted_modules: set[str] = set()

    # -- name resolution -------------------------------------------------

    def _rewrite_path(self, path: str) -> str:
        head, sep, rest = path.partition(".")
        base = self.bindings.get(head)
        expanded = base + sep + rest if base is not None else path
        expanded = self.db.normalize_path(expanded)
        contracted = self.db.contract_path(expanded)
        if contracted is None:
            return path
        return self.db.resolve_name(contracted)

    def visit_Name(self, node: ast.Name) -> ast.expr:
        if not isinstance(node.ctx, ast.Load):
            return node
        new = self._rewrite_path(node.id)
        if new != node.id:
            return _make_chain(new)
        return node

    def visit_Attribute(self, node: ast.Attribute) -> ast.expr:
        dotted = _dotted_name(node)
        if dotted is None or not isinstance(node.ctx, ast.Load):
            return self.generic_visit(node)
        new = self._rewrite_path(dotted)
        if new != dotted:
            return _make_chain(new)
        return node

    # -- argument binding --------------------------------------------------

    def visit_Call(self, node: ast.Call) -> ast.expr:
        self.generic_visit(node)
        func_text = _dotted_name(node.func)
        if func_text is None:
            return node
        sig = self.db.signature_for(func_text)
        if sig is None:
            if self.strict and self.db.looks_framework_qualified(func_text):
                raise UnknownCallableError(
                    f"no signature for {func_text!r} ({self.db.framework})"
                )
            return node
        if _has_star_args(node):
            log.warning(
                "call to %s uses star expansion; left uncanonicalized", func_text
            )
            return node
        if sig.variadic:
            return node
        return bind_arguments(node, sig)

    # -- import statements -------------------------------------------------

    def _import_decision(self, bound_path: str, bound_name: str, spelled_path: str):
        """Decide whether one import binding stays or is rewritten.

        Returns ``None`` to keep the original spelling, else the module
        path whose canonical import replaces it.
        """
        short = self.db.import_aliases.get(bound_path)
        if short is not None:
            if bound_path == spelled_path and bound_name == short:
                return None
            return bound_path
        for prefix in _split_prefixes(bound_path)[1:]:
            if prefix in self.db.import_aliases:
                return prefix
        return None

    def _canonical_import(self, module_path: str) -> ast.stmt:
        short = self.db.import_aliases[module_path]
        if "." not in module_path and short == module_path:
            return ast.Import(names=[ast.alias(name=module_path)])
        return ast.Import(names=[ast.alias(name=module_path, asname=short)])

    def _emit(self, module_path: str, out: list[ast.stmt]) -> None:
        if module_path not in self.emitted_modules:
            self.emitted_modules.add(module_path)
            out.append(self._canonical_import(module_path))

    def visit_Import(self, node: ast.Import) -> list[ast.stmt]:
        kept: list[ast.alias] = []
        synthesized: list[ast.stmt] = []
        for alias in node.names:
            path = self.db.normalize_path(alias.name)
            bound = alias.asname or alias.name.split(".", 1)[0]
            target = self._import_decision(path, bound, alias.name)
            if target is None:
                kept.append(alias)
                if path in self.db.import_aliases:
                    self.emitted_modules.add(path)
            else:
                self._emit(target, synthesized)
        out: list[ast.stmt] = []
        if kept:
            out.append(ast.Import(names=kept))
        out.extend(synthesized)
        return out

    def visit_ImportFrom(self, node: ast.ImportFrom) -> list[ast.stmt]:
        if node.level or node.module is None:
            return [node]
        kept: list[ast.alias] = []
        synthesized: list[ast.stmt] = []
        for alias in node.names:
            if alias.name == "*":
                kept.append(alias)
                continue
            spelled = f"{node.module}.{alias.name}"
            path = self.db.normalize_path(spelled)
            bound = alias.asname or alias.name
            target = self._import_decision(path, bound, spelled)
            if target is None:
                kept.append(alias)
                if path in self.db.import_aliases:
                    self.emitted_modules.add(path)
            else:
                self._emit(target, synthesized)
        out: list[ast.stmt] = []
        if kept:
            out.append(ast.ImportFrom(module=node.module, names=kept, level=0))
        out.extend(synthesized)
        return out


def _preserved_modules(tree: ast.AST, db: SignatureDatabase) -> set[str]:
    """Module paths whose canonical import already appears in the tree."""
    preserved: set[str] = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            for alias in node.names:
                short = db.import_aliases.get(alias.name)
                bound = alias.asname or alias.name.split(".", 1)[0]
                if short is not None and bound == short:
                    if db.normalize_path(alias.name) == alias.name:
                        preserved.add(alias.name)
        elif isinstance(node, ast.ImportFrom):
            if node.level or node.module is None:
                continue
            for alias in node.names:
                if alias.name == "*":
                    continue
                path = f"{node.module}.{alias.name}"
                short = db.import_aliases.get(path)
                bound = alias.asname or alias.name
                if short is not None and bound == short:
                    if db.normalize_path(path) == path:
                        preserved.add(path)
    return preserved


# -- public operations -----------------------------------------------------


def bind_arguments(call: ast.Call, sig: ApiSignature) -> ast.Call:
    """Convert positionals to keywords and sort them in signature order.

    Keyword names absent from the signature keep their original relative
    order after all known parameters.
    """
    if _has_star_args(call):
        raise ArityError(f"{sig.canonical_name}: cannot bind star arguments")
    if len(call.args) > len(sig.parameters):
        raise ArityError(
            f"{sig.canonical_name} has {len(sig.parameters)} parameters, "
            f"got {len(call.args)} positional arguments"
        )
    by_name: dict[str, ast.keyword] = {}
    for param, arg in zip(sig.parameters, call.args):
        by_name[param] = ast.keyword(arg=param, value=arg)
    for kw in call.keywords:
        if kw.arg in by_name:
            raise DuplicateKeywordError(
                f"{sig.canonical_name} got multiple values for {kw.arg!r}"
            )
        by_name[kw.arg] = kw
    ordered = [by_name.pop(p) for p in sig.parameters if p in by_name]
    ordered.extend(by_name.values())
    return ast.Call(func=call.func, args=[], keywords=ordered)


def canonicalize(
    unit: SourceUnit, db: SignatureDatabase, strict: bool = False
) -> SourceUnit:
    """Rewrite a unit into canonical form (idempotent)."""
    if db.framework != unit.framework:
        raise ConfigError(
            f"database is for {db.framework!r}, unit is {unit.framework!r}"
        )
    try:
        tree = ast.parse(unit.text)
    except (SyntaxError, ValueError) as exc:
        raise ParseError(f"{unit.origin or '<unit>'}: {exc}") from None
    bindings = _collect_bindings(tree, db)
    rewriter = _Rewriter(db, bindings, strict)
    rewriter.emitted_modules |= _preserved_modules(tree, db)
    tree = rewriter.visit(tree)
    _fix_empty_bodies(tree)
    ast.fix_missing_locations(tree)
    return replace(unit, text=ast.unparse(tree))


def extract_keywords(
    unit: SourceUnit, db: SignatureDatabase
) -> list[KeywordOccurrence]:
    """List keyword occurrences of a canonicalized unit in source order."""
    try:
        tree = ast.parse(unit.text)
    except (SyntaxError, ValueError) as exc:
        raise ParseError(f"{unit.origin or '<unit>'}: {exc}") from None
    data = unit.text.encode("utf-8")
    starts = _line_starts(data)
    whole = (0, len(data))
    occurrences: list[KeywordOccurrence] = []
    call_ids = itertools.count()

    def visit(node: ast.AST, ctx_span: tuple[int, int]) -> None:
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
            ctx_span = _node_span(node, starts)
        if isinstance(node, ast.Call) and not _has_star_args(node):
            func_text = _dotted_name(node.func)
            sig = db.signatures.get(func_text) if func_text else None
            if sig is not None:
                call_id = next(call_ids)
                context = data[ctx_span[0]:ctx_span[1]].decode("utf-8")
                keyword = ApiKeyword(unit.framework, CALLABLE, func_text)
                occurrences.append(
                    KeywordOccurrence(
                        keyword=keyword,
                        span=_node_span(node.func, starts),
                        context=context,
                        context_offset=ctx_span[0],
                        call_id=call_id,
                    )
                )
                params = set(sig.parameters)
                for kw in node.keywords:
                    if kw.arg not in params:
                        continue
                    start = starts[kw.lineno - 1] + kw.col_offset
                    occurrences.append(
                        KeywordOccurrence(
                            keyword=ApiKeyword(
                                unit.framework, PARAMETER, kw.arg, owner=func_text
                            ),
                            span=(start, start + len(kw.arg.encode("utf-8"))),
                            context=context,
                            context_offset=ctx_span[0],
                            call_id=call_id,
                        )
                    )
        for child in ast.iter_child_nodes(node):
            visit(child, ctx_span)

    visit(tree, whole)
    occurrences.sort(key=lambda occ: occ.span)
    return occurrences


def extract_module_classes(
    file_text: str,
    dbs: Mapping[str, SignatureDatabase],
    base_classes: Mapping[str, tuple[str, ...]] | None = None,
    origin: str = "",
) -> list[SourceUnit]:
    """Extract framework module classes from one source file.

    Files that fail to parse yield no units (the caller reports skips).
    Alias unification runs before classes are cut out so each unit
    canonicalizes standalone.
    """
    try:
        ast.parse(file_text)
    except (SyntaxError, ValueError) as exc:
        log.warning("skipping unparseable file %s: %s", origin or "<text>", exc)
        return []
    patterns_by_fw = base_classes or DEFAULT_BASE_CLASSES
    units: list[SourceUnit] = []
    for framework in sorted(dbs):
        patterns = set(patterns_by_fw.get(framework, ()))
        if not patterns:
            continue
        db = dbs[framework]
        tree = ast.parse(file_text)
        bindings = _collect_bindings(tree, db)
        rewriter = _Rewriter(db, bindings, strict=False)
        rewriter.emitted_modules |= _preserved_modules(tree, db)
        tree = rewriter.visit(tree)
        _fix_empty_bodies(tree)
        ast.fix_missing_locations(tree)
        for node in ast.walk(tree):
            if not isinstance(node, ast.ClassDef):
                continue
            bases = {d for d in map(_dotted_name, node.bases) if d}
            if bases & patterns:
                label = f"{origin}:{node.name}" if origin else node.name
                units.append(
                    SourceUnit(
                        text=ast.unparse(node), framework=framework, origin=label
                    )
                )
    return units
