"""Reading and writing BRAT standoff annotations.

Only text-bound ("T") annotations become :class:`AnnotationRecord` objects.
Every other line (relations, events, attributes, notes, blank lines) is kept
verbatim together with its position so that a parse/serialize round trip is
byte-identical.

Offsets are code-point offsets into the decoded text, which is what BRAT
itself uses; Python string indexing already works in code points.
"""

import logging
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

logger = logging.getLogger(__name__)

# BRAT joins the fragments of a discontinuous annotation with one space.
DISCONT_SEP = " "

_ID_RE = re.compile(r"^T\S*$")
_SPAN_RE = re.compile(r"^([0-9]+) ([0-9]+)$")


class BratParseError(ValueError):
    """A .ann file (or one of its lines) could not be parsed."""

    def __init__(self, message, line_no=None, path=None):
        self.message = message
        self.line_no = line_no
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}: "
        if line_no is not None:
            where += f"line {line_no}: "
        super().__init__(where + message)


class BratLoadError(ValueError):
    """An .ann/.txt pair is inconsistent (e.g. offsets past the end of text)."""


@dataclass(frozen=True)
class AnnotationRecord:
    id: str
    category: str
    spans: tuple
    surface: str | None = None

    def __post_init__(self):
        spans = tuple((int(s), int(e)) for s, e in self.spans)
        if not spans:
            raise ValueError(f"{self.id}: annotation has no spans")
        prev_end = None
        for start, end in spans:
            if start < 0 or end <= start:
                raise ValueError(f"{self.id}: invalid span ({start}, {end})")
            if prev_end is not None and start < prev_end:
                raise ValueError(f"{self.id}: spans must be sorted and non-overlapping")
            prev_end = end
        object.__setattr__(self, "spans", spans)

    @property
    def start(self):
        return self.spans[0][0]

    @property
    def end(self):
        return self.spans[-1][1]

    @property
    def length(self):
        return sum(e - s for s, e in self.spans)

    def extract(self, text):
        return DISCONT_SEP.join(text[s:e] for s, e in self.spans)


@dataclass(frozen=True)
class DocumentBundle:
    """One document: its text (optional), annotations and opaque .ann lines.

    ``passthrough`` holds ``(slot, line)`` pairs where ``slot`` is the number
    of text-bound records preceding the line in the original file.
    """

    doc_id: str
    annotations: tuple = ()
    text: str | None = None
    patient_id: str | None = None
    passthrough: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "annotations", tuple(self.annotations))
        object.__setattr__(self, "passthrough", tuple(tuple(p) for p in self.passthrough))
        if self.text is not None:
            n = len(self.text)
            for rec in self.annotations:
                if rec.end > n:
                    raise BratLoadError(
                        f"{self.doc_id}: annotation {rec.id} span ends at {rec.end} "
                        f"beyond text length {n}"
                    )

    @property
    def effective_patient(self):
        return self.patient_id if self.patient_id is not None else self.doc_id

    def with_annotations(self, annotations, **changes):
        return replace(self, annotations=tuple(annotations), **changes)


@dataclass
class EventLog:
    """Collects reviewable events as ``(doc_id, event, detail)`` rows."""

    rows: list = field(default_factory=list)

    def add(self, doc_id, event, detail=""):
        logger.warning("%s: %s %s", doc_id, event, detail)
        self.rows.append((doc_id, event, detail))

    def extend(self, rows):
        self.rows.extend(rows)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)


def _parse_spans(spec, line_no):
    spans = []
    for part in spec.split(";"):
        m = _SPAN_RE.match(part)
        if m is None:
            raise BratParseError(f"malformed span {part!r}", line_no)
        start, end = int(m.group(1)), int(m.group(2))
        if end <= start:
            raise BratParseError(f"span end {end} not after start {start}", line_no)
        spans.append((start, end))
    for (s0, e0), (s1, e1) in zip(spans, spans[1:]):
        if s1 < e0:
            raise BratParseError("discontinuous spans must be sorted and disjoint", line_no)
    return spans


def _parse_textbound(line, line_no):
    fields = line.split("\t", 2)
    if len(fields) < 2:
        raise BratParseError("text-bound line needs tab-separated id and type/offsets", line_no)
    ann_id, type_offsets = fields[0], fields[1]
    if not _ID_RE.match(ann_id):
        raise BratParseError(f"bad annotation id {ann_id!r}", line_no)
    if " " not in type_offsets:
        raise BratParseError("missing offsets after category", line_no)
    category, span_spec = type_offsets.split(" ", 1)
    if not category:
        raise BratParseError("empty category", line_no)
    spans = _parse_spans(span_spec, line_no)
    surface = fields[2] if len(fields) == 3 else None
    return AnnotationRecord(ann_id, category, tuple(spans), surface)


def read_ann(raw):
    """Parse .ann content into ``(records, passthrough)``.

    Raises :class:`BratParseError` for malformed text-bound lines, duplicate
    ids, or undecodable bytes.
    """
    if isinstance(raw, (bytes, bytearray)):
        try:
            raw = bytes(raw).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise BratParseError(f"not valid UTF-8: {exc}") from None
    if not isinstance(raw, str):
        raise BratParseError(f"expected str or bytes, got {type(raw).__name__}")
    if raw == "":
        return [], []
    lines = raw.split("\n")
    if lines[-1] == "":
        lines.pop()
    records, passthrough, seen = [], [], set()
    for line_no, line in enumerate(lines, start=1):
        if line.startswith("T"):
            rec = _parse_textbound(line, line_no)
            if rec.id in seen:
                raise BratParseError(f"duplicate annotation id {rec.id}", line_no)
            seen.add(rec.id)
            records.append(rec)
        else:
            passthrough.append((len(records), line))
    return records, passthrough


def parse_ann(raw):
    """Text-bound records of an .ann file; other lines are ignored here."""
    return read_ann(raw)[0]


def _format_record(rec):
    spans = ";".join(f"{s} {e}" for s, e in rec.spans)
    line = f"{rec.id}\t{rec.category} {spans}"
    if rec.surface is not None:
        # .ann is line oriented; BRAT itself flattens newlines in the text column
        line += "\t" + rec.surface.replace("\r", " ").replace("\n", " ")
    return line


def serialize_ann(records, passthrough=()):
    """Inverse of :func:`read_ann`.

    ``passthrough`` may be ``(slot, line)`` pairs as returned by
    :func:`read_ann` or bare strings, which are appended after the records.
    """
    slotted = []
    for item in passthrough:
        if isinstance(item, str):
            slotted.append((len(records), item))
        else:
            slotted.append((int(item[0]), item[1]))
    out, j = [], 0
    for i, rec in enumerate(records):
        while j < len(slotted) and slotted[j][0] <= i:
            out.append(slotted[j][1])
            j += 1
        out.append(_format_record(rec))
    out.extend(line for _, line in slotted[j:])
    if not out:
        return ""
    return "\n".join(out) + "\n"


def load_bundle(ann_path, txt_path=None, doc_id=None, patient_id=None, events=None):
    """Load a document from its .ann file and optional .txt companion.

    When text is present each record's surface is re-derived from it; a
    surface stored in the .ann that disagrees is reported and discarded.
    """
    ann_path = Path(ann_path)
    if doc_id is None:
        doc_id = ann_path.stem
    try:
        records, passthrough = read_ann(ann_path.read_bytes())
    except BratParseError as exc:
        raise BratParseError(exc.message, exc.line_no, ann_path) from None
    text = None
    if txt_path is not None:
        text = Path(txt_path).read_text(encoding="utf-8")
        n = len(text)
        fixed = []
        for rec in records:
            if rec.end > n:
                raise BratLoadError(
                    f"{ann_path}: annotation {rec.id} span ends at {rec.end} "
                    f"beyond text length {n}"
                )
            derived = rec.extract(text)
            if rec.surface is not None and rec.surface != _flatten(derived):
                if events is not None:
                    events.add(doc_id, "surface_mismatch",
                               f"{rec.id}: .ann has {rec.surface!r}, text has {derived!r}")
                else:
                    logger.warning("%s: %s surface mismatch, using text", doc_id, rec.id)
            fixed.append(replace(rec, surface=derived))
        records = fixed
    return DocumentBundle(doc_id, tuple(records), text, patient_id, tuple(passthrough))


def _flatten(s):
    return s.replace("\r", " ").replace("\n", " ")


def _atomic_write(path, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(data)
    os.replace(tmp, path)


def write_bundle(bundle, out_dir):
    """Write ``doc_id.ann`` (and ``doc_id.txt`` when text is present).

    Files are written to a temporary name and renamed into place so that an
    interrupted run never leaves a truncated document behind.
    """
    out_dir = Path(out_dir)
    ann_path = out_dir / f"{bundle.doc_id}.ann"
    txt_path = None
    if bundle.text is not None:
        txt_path = out_dir / f"{bundle.doc_id}.txt"
        _atomic_write(txt_path, bundle.text)
    _atomic_write(ann_path, serialize_ann(bundle.annotations, bundle.passthrough))
    return ann_path, txt_path


def read_patient_map(path):
    """Read a ``doc_id,patient_id`` CSV into a dict."""
    import csv

    mapping = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"doc_id", "patient_id"} <= set(reader.fieldnames):
            raise BratLoadError(f"{path}: expected header doc_id,patient_id")
        for row_no, row in enumerate(reader, start=2):
            doc, patient = row["doc_id"], row["patient_id"]
            if not doc:
                raise BratLoadError(f"{path}: row {row_no}: empty doc_id")
            mapping[doc] = patient
    return mapping


def iter_corpus(in_dir):
    """Yield ``(doc_id, ann_path, txt_path_or_None)`` for every .ann under ``in_dir``.

    ``doc_id`` is the path relative to ``in_dir`` without extension, using
    forward slashes, so output can mirror the input tree.
    """
    in_dir = Path(in_dir)
    for ann_path in sorted(in_dir.rglob("*.ann")):
        rel = ann_path.relative_to(in_dir).with_suffix("")
        txt_path = ann_path.with_suffix(".txt")
        yield rel.as_posix(), ann_path, (txt_path if txt_path.exists() else None)


def load_corpus(in_dir, patients=None, events=None):
    bundles = []
    for doc_id, ann_path, txt_path in iter_corpus(in_dir):
        patient = patients.get(doc_id) if patients else None
        bundles.append(load_bundle(ann_path, txt_path, doc_id, patient, events))
    return bundles
