"""Critical-entity distribution summaries for a corpus or distribution file."""

import statistics
from dataclasses import dataclass

from . import brat
from .leakage import PhiDistribution


class EmptyCorpusError(ValueError):
    pass


@dataclass(frozen=True)
class CountSummary:
    mean: float
    median: float
    minimum: int
    maximum: int
    n: int

    @classmethod
    def of(cls, counts):
        counts = [int(c) for c in counts]
        if not counts:
            raise EmptyCorpusError("no documents to summarise")
        return cls(statistics.fmean(counts), statistics.median(counts),
                   min(counts), max(counts), len(counts))


@dataclass(frozen=True)
class DistributionReport:
    documents: CountSummary
    patients: CountSummary

    def format(self):
        def num(x):
            return f"{x:g}" if float(x).is_integer() else f"{x:.1f}"

        lines = ["Critical entity distribution", ""]
        width = 30
        for title, s in (("Document", self.documents), ("Patient", self.patients)):
            lines.append(f"{title} statistics (n={s.n})")
            lines.append(f"  {'Critical entities mean':<{width}}{s.mean:.1f}")
            lines.append(f"  {'Critical entities median':<{width}}{num(s.median)}")
            lines.append(f"  {'Critical entities range':<{width}}{s.minimum}-{s.maximum}")
            lines.append("")
        return "\n".join(lines)


def distribution_report(dist, empty_docs=()):
    """Per-document and per-patient critical-entity summaries.

    Documents whose entries are all non-critical count as zero, as do the
    ``(doc_id, patient_id)`` pairs in ``empty_docs`` (documents with no
    annotations, which a distribution cannot hold).
    """
    doc_counts = dict(zip(dist.doc_ids, dist.critical_per_doc().tolist()))
    patient_of = {e.doc_id: e.patient_id for e in dist.entries}
    for doc_id, patient_id in empty_docs:
        doc_counts.setdefault(doc_id, 0)
        patient_of.setdefault(doc_id, patient_id)
    if not doc_counts:
        raise EmptyCorpusError("distribution has no documents")
    patient_counts = {}
    for doc_id, n in doc_counts.items():
        pid = patient_of[doc_id]
        patient_counts[pid] = patient_counts.get(pid, 0) + n
    return DistributionReport(CountSummary.of(doc_counts.values()),
                              CountSummary.of(patient_counts.values()))


def corpus_distribution(in_dir, registry, patients=None, events=None):
    """Load a BRAT corpus and count mentions per (document, category).

    Returns the distribution and the ``(doc_id, patient_id)`` pairs of
    documents without annotations.
    """
    bundles = brat.load_corpus(in_dir, patients, events)
    if not bundles:
        raise EmptyCorpusError(f"{in_dir}: no .ann files found")
    dist = PhiDistribution.from_bundles(bundles, registry)
    empty = [(b.doc_id, b.effective_patient) for b in bundles if not b.annotations]
    return dist, empty
