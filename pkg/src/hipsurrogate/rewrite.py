"""Splicing surrogates into text and remapping annotation offsets."""

from dataclasses import dataclass, replace

from .brat import AnnotationRecord


class PlanError(ValueError):
    """A replacement plan does not fit the bundle it is applied to."""


@dataclass(frozen=True)
class SpliceOp:
    start: int
    end: int
    replacement: str

    @property
    def delta(self):
        return len(self.replacement) - (self.end - self.start)


def _overlaps(a, b):
    return any(s0 < e1 and s1 < e0 for s0, e0 in a.spans for s1, e1 in b.spans)


def resolve_overlaps(records, events=None, doc_id=""):
    """Drop records that overlap a longer one.

    Records are ranked by total span length (longest first) and then by
    their position in the input, so on a tie the earlier id wins. A record
    is kept only if it overlaps nothing already kept; nested records
    therefore lose to their container. Surviving records keep input order.
    """
    records = list(records)
    order = sorted(range(len(records)), key=lambda i: (-records[i].length, i))
    kept_idx = []
    for i in order:
        rec = records[i]
        winner = next((records[j] for j in kept_idx if _overlaps(rec, records[j])), None)
        if winner is None:
            kept_idx.append(i)
        elif events is not None:
            events.add(doc_id, "overlap_dropped", f"{rec.id} ({rec.category}) overlaps {winner.id}")
    kept_idx.sort()
    return [records[i] for i in kept_idx]


def apply_plan(bundle, plan):
    """Return a new bundle with every planned span replaced by its surrogate.

    The surrogate takes the place of the record's first span; text under any
    further (discontinuous) spans is deleted and the record collapses to one
    span. Offsets after each splice move by the running length delta. Without
    text the offsets are computed the same way, as if the text existed.
    """
    annotations = list(bundle.annotations)
    if not plan.assignments:
        return bundle
    by_index = {}
    for idx, _key, surrogate in plan.assignments:
        if not 0 <= idx < len(annotations):
            raise PlanError(f"{bundle.doc_id}: plan references mention {idx}, "
                            f"bundle has {len(annotations)}")
        if idx in by_index:
            raise PlanError(f"{bundle.doc_id}: mention {idx} assigned twice")
        by_index[idx] = surrogate

    ops = []
    for idx, surrogate in by_index.items():
        rec = annotations[idx]
        first_start, first_end = rec.spans[0]
        ops.append((first_start, first_end, surrogate, idx))
        for s, e in rec.spans[1:]:
            ops.append((s, e, "", None))
    ops.sort(key=lambda op: (op[0], op[1]))
    for (s0, e0, *_), (s1, e1, *_) in zip(ops, ops[1:]):
        if s1 < e0:
            raise PlanError(f"{bundle.doc_id}: planned spans overlap at {s1}; "
                            "resolve overlaps before applying a plan")

    text = bundle.text
    pieces = []
    cursor = 0
    shift = 0
    new_spans = {}
    for start, end, replacement, idx in ops:
        if text is not None:
            pieces.append(text[cursor:start])
            pieces.append(replacement)
        cursor = end
        if idx is not None:
            new_start = start + shift
            new_spans[idx] = (new_start, new_start + len(replacement))
        shift += len(replacement) - (end - start)
    if text is not None:
        pieces.append(text[cursor:])
        new_text = "".join(pieces)
    else:
        new_text = None

    out = []
    for idx, rec in enumerate(annotations):
        if idx in new_spans:
            span = new_spans[idx]
            if span[1] == span[0]:
                # empty surrogate: BRAT cannot express a zero-width span
                raise PlanError(f"{bundle.doc_id}: empty surrogate for {rec.id}")
            out.append(AnnotationRecord(rec.id, rec.category, (span,), by_index[idx]))
        else:
            out.append(_shift_record(rec, ops))
    return replace(bundle, annotations=tuple(out), text=new_text)


def _shift_record(rec, ops):
    # an unplanned record keeps its text; move it past earlier splices
    def moved(pos):
        delta = 0
        for start, end, replacement, _ in ops:
            if end <= pos:
                delta += len(replacement) - (end - start)
            else:
                break
        return pos + delta

    spans = tuple((moved(s), moved(s) + (e - s)) for s, e in rec.spans)
    return replace(rec, spans=spans)


def length_delta(bundle, plan):
    """Expected ``len(new_text) - len(old_text)`` for ``plan``."""
    total = 0
    for idx, _key, surrogate in plan.assignments:
        rec = bundle.annotations[idx]
        total += len(surrogate) - rec.length
    return total
