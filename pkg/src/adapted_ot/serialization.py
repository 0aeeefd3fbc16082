"""JSON input and output for trees, measures and experiment configs.

Documents are parsed with position tracking so that schema violations can be
reported with a line and column.  In rational mode numbers with a fractional
part are read exactly as :class:`fractions.Fraction`.
"""

from __future__ import annotations

import json
import json.decoder
import json.scanner
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from typing import Optional

import jsonschema

from .lp import _resolve_exact
from .measures import DiscreteMeasure, _json_number, measure_from_json, measure_to_json
from .process import ProcessTree

__all__ = [
    "DocumentError",
    "parse_json",
    "load_json",
    "schema",
    "validate_document",
    "detect_kind",
    "tree_from_json",
    "tree_to_json",
    "load_tree",
    "load_measure",
    "load_document",
    "dump_json",
]

KINDS = ("tree", "measure", "config")


@dataclass
class DocumentError(Exception):
    """Malformed or invalid document, with a 1-based source position when known."""

    message: str
    line: Optional[int] = None
    column: Optional[int] = None
    source: str = "<input>"

    def __str__(self) -> str:
        where = self.source
        if self.line is not None:
            where += f":{self.line}:{self.column}"
        return f"{where}: {self.message}"


class _LocDict(dict):
    pos = 0


class _LocList(list):
    pos = 0


def _decoder(exact: bool) -> json.JSONDecoder:
    dec = json.JSONDecoder(parse_float=Fraction if exact else float)

    def parse_object(s_and_end, *args, **kw):
        start = s_and_end[1] - 1
        obj, end = json.decoder.JSONObject(s_and_end, *args, **kw)
        obj.pos = start
        return obj, end

    def parse_array(s_and_end, scan_once, **kw):
        start = s_and_end[1] - 1
        arr, end = json.decoder.JSONArray(s_and_end, scan_once)
        out = _LocList(arr)
        out.pos = start
        return out, end

    dec.object_pairs_hook = _LocDict
    dec.parse_object = parse_object
    dec.parse_array = parse_array
    # the C scanner ignores overridden hooks
    dec.scan_once = json.scanner.py_make_scanner(dec)
    return dec


def _line_col(text: str, pos: int) -> tuple:
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


def parse_json(text: str, source: str = "<input>", exact: Optional[bool] = None):
    """Parse ``text``; containers remember their offset in ``text``."""
    try:
        doc = _decoder(_resolve_exact(exact)).decode(text)
    except json.JSONDecodeError as err:
        raise DocumentError(f"malformed JSON: {err.msg}", err.lineno, err.colno, source) from None
    return doc


def load_json(path: str, exact: Optional[bool] = None):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise DocumentError(f"cannot read file: {err.strerror}", source=path) from None
    return text, parse_json(text, path, exact)


def schema(kind: str) -> dict:
    if kind not in KINDS:
        raise ValueError(f"unknown document kind {kind!r}")
    return json.loads(resources.files(__package__).joinpath(f"schemas/{kind}.schema.json").read_text())


def _locate(doc, path, text: str) -> tuple:
    node, pos = doc, getattr(doc, "pos", 0)
    for key in path:
        try:
            node = node[key]
        except (KeyError, IndexError, TypeError):
            break
        pos = getattr(node, "pos", pos)
    return _line_col(text, pos)


def validate_document(doc, kind: str, text: str = "", source: str = "<input>") -> list:
    """All schema violations as :class:`DocumentError` objects, in document order."""
    validator = jsonschema.Draft202012Validator(schema(kind))
    errors = []
    for err in validator.iter_errors(doc):
        line, col = _locate(doc, err.absolute_path, text) if text else (None, None)
        loc = "/".join(str(k) for k in err.absolute_path) or "(root)"
        errors.append(DocumentError(f"{loc}: {err.message}", line, col, source))
    errors.sort(key=lambda e: (e.line or 0, e.column or 0, e.message))
    return errors


def detect_kind(doc) -> str:
    if isinstance(doc, dict):
        if "root" in doc:
            return "tree"
        if "atoms" in doc:
            return "measure"
        if "family" in doc:
            return "config"
    raise DocumentError("cannot tell whether the document is a tree, a measure or a config")


def tree_from_json(doc) -> ProcessTree:
    """Build a :class:`ProcessTree` from a schema-valid document."""
    return ProcessTree.build(doc["N"], doc["d"], doc["root"].get("children", []))


def tree_to_json(x: ProcessTree) -> dict:
    def node(u):
        return {"p": _json_number(x.prob[u]), "value": [_json_number(v) for v in x.value[u]],
                "children": [node(c) for c in x.children[u]]}

    return {"N": x.N, "d": x.d, "root": {"children": [node(c) for c in x.children[0]]}}


def load_document(path: str, kind: Optional[str] = None, exact: Optional[bool] = None):
    """Read, schema-check and build a document.

    Returns ``(kind, obj)`` where ``obj`` is a :class:`ProcessTree`, a
    :class:`DiscreteMeasure` or the plain config dict.  Raises
    :class:`DocumentError` on the first problem.
    """
    text, doc = load_json(path, exact)
    kind = kind or detect_kind(doc)
    errors = validate_document(doc, kind, text, path)
    if errors:
        raise errors[0]
    try:
        if kind == "tree":
            return kind, tree_from_json(doc)
        if kind == "measure":
            return kind, measure_from_json(doc)
    except ValueError as err:
        line, col = _line_col(text, getattr(doc, "pos", 0))
        raise DocumentError(str(err), line, col, path) from None
    return kind, doc


def load_tree(path: str, exact: Optional[bool] = None) -> ProcessTree:
    return load_document(path, "tree", exact)[1]


def load_measure(path: str, exact: Optional[bool] = None) -> DiscreteMeasure:
    return load_document(path, "measure", exact)[1]


def _default(o):
    if isinstance(o, Fraction):
        return _json_number(o)
    if isinstance(o, DiscreteMeasure):
        return measure_to_json(o)
    if isinstance(o, ProcessTree):
        return tree_to_json(o)
    if hasattr(o, "tolist"):
        return o.tolist()
    if hasattr(o, "item"):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def dump_json(obj, indent: Optional[int] = 2) -> str:
    return json.dumps(obj, default=_default, indent=indent)
