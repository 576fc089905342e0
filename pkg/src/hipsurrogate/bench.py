"""Deterministic synthetic corpus and resynthesis throughput measurement."""

import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

from . import brat
from ._rng import py_rng
from .resynth import resynthesize_corpus

# proportions of a large clinical corpus: ~1,136 words and ~60 PHI mentions per note
DEFAULT_WORDS_PER_DOC = 1136
DEFAULT_ENTITIES_PER_DOC = 60

_FILLER = (
    "patient presents with history of chest pain shortness breath denies fever chills "
    "nausea vomiting the was seen in clinic today for follow up blood pressure stable "
    "continue current medications review labs and imaging plan discussed with family "
    "no acute distress alert oriented lungs clear heart regular rate rhythm abdomen soft "
    "nontender extremities without edema assessment and plan will return in weeks"
).split()

_FIRST = ("John", "Mary", "Robert", "Linda", "James", "Susan", "Michael", "Karen",
          "David", "Nancy", "William", "Lisa", "Thomas", "Betty", "Daniel", "Helen")
_LAST = ("Smith", "Johnson", "Williams", "Brown", "Jones", "Miller", "Davis", "Wilson",
         "Moore", "Taylor", "Anderson", "Jackson", "White", "Harris", "Martin", "Clark")
_CITIES = ("Birmingham", "Huntsville", "Mobile", "Tuscaloosa", "Auburn", "Dothan")
_HOSPITALS = ("Riverside Medical Center", "St. Vincent Hospital", "Baptist Health")


def _entity(rng, patient, category_weights):
    r = rng.random()
    acc = 0.0
    for cat, w in category_weights:
        acc += w
        if r < acc:
            break
    if cat == "PATIENT":
        return cat, patient
    if cat == "DOCTOR":
        return cat, f"Dr. {rng.choice(_LAST)}"
    if cat == "DATE":
        return cat, f"{rng.randint(1, 12)}/{rng.randint(1, 28)}/{rng.randint(2005, 2020)}"
    if cat == "MEDICALRECORD":
        return cat, f"{rng.randint(10_000_000, 99_999_999)}"
    if cat == "PHONE":
        return cat, f"({rng.randint(200, 999)}) {rng.randint(200, 999)}-{rng.randint(0, 9999):04d}"
    if cat == "AGE":
        return cat, str(rng.randint(18, 95))
    if cat == "CITY":
        return cat, rng.choice(_CITIES)
    return "HOSPITAL", rng.choice(_HOSPITALS)


_WEIGHTS = (("PATIENT", 0.25), ("DOCTOR", 0.2), ("DATE", 0.25), ("MEDICALRECORD", 0.08),
            ("PHONE", 0.05), ("AGE", 0.05), ("CITY", 0.07), ("HOSPITAL", 0.05))


def make_document(doc_id, words_per_doc, entities_per_doc, seed):
    """A synthetic note with ``entities_per_doc`` annotated PHI mentions."""
    rng = py_rng(seed, "bench", doc_id)
    patient = f"{rng.choice(_FIRST)} {rng.choice(_LAST)}"
    n_fill = max(words_per_doc - 2 * entities_per_doc, 0)
    tokens = [rng.choice(_FILLER) for _ in range(n_fill)]
    slots = sorted(rng.randrange(len(tokens) + 1) for _ in range(entities_per_doc))
    pieces, records = [], []
    pos = 0
    prev = 0
    for k, slot in enumerate(slots):
        chunk = " ".join(tokens[prev:slot])
        if chunk:
            chunk += " "
        pieces.append(chunk)
        pos += len(chunk)
        cat, surface = _entity(rng, patient, _WEIGHTS)
        records.append(brat.AnnotationRecord(f"T{k + 1}", cat, ((pos, pos + len(surface)),),
                                             surface))
        pieces.append(surface + " ")
        pos += len(surface) + 1
        prev = slot
    pieces.append(" ".join(tokens[prev:]) + "\n")
    return brat.DocumentBundle(doc_id, tuple(records), "".join(pieces))


def write_corpus(out_dir, n_docs, words_per_doc, entities_per_doc, seed):
    out_dir = Path(out_dir)
    n_entities = 0
    for i in range(n_docs):
        doc = make_document(f"note{i:06d}", words_per_doc, entities_per_doc, seed)
        brat.write_bundle(doc, out_dir)
        n_entities += len(doc.annotations)
    return n_entities


@dataclass(frozen=True)
class BenchReport:
    n_docs: int
    n_entities: int
    n_words: int
    seconds: float

    @property
    def docs_per_sec(self):
        return self.n_docs / self.seconds if self.seconds > 0 else float("inf")

    @property
    def entities_per_sec(self):
        return self.n_entities / self.seconds if self.seconds > 0 else float("inf")

    def as_dict(self):
        return {"n_docs": self.n_docs, "n_entities": self.n_entities, "n_words": self.n_words,
                "seconds": self.seconds, "docs_per_sec": self.docs_per_sec,
                "entities_per_sec": self.entities_per_sec}


def run_bench(estimator, n_docs=1000, words_per_doc=DEFAULT_WORDS_PER_DOC,
              entities_per_doc=DEFAULT_ENTITIES_PER_DOC, seed=0, jobs=1, keep_dir=None):
    """Generate a corpus in a temp dir and time end-to-end resynthesis of it.

    With ``keep_dir`` the generated (``in/``) and rewritten (``out/``)
    corpora are kept there instead of a temporary directory.
    """
    if n_docs < 1 or words_per_doc < 1 or entities_per_doc < 0:
        raise ValueError("n_docs and words_per_doc must be >= 1, entities_per_doc >= 0")
    with tempfile.TemporaryDirectory(prefix="hipsurrogate-bench-") as tmp:
        root = Path(keep_dir) if keep_dir is not None else Path(tmp)
        src, dst = root / "in", root / "out"
        n_entities = write_corpus(src, n_docs, words_per_doc, entities_per_doc, seed)
        estimator._check_fitted()
        t0 = time.perf_counter()
        resynthesize_corpus(src, dst, estimator, jobs=jobs)
        seconds = time.perf_counter() - t0
    return BenchReport(n_docs, n_entities, n_docs * words_per_doc, seconds)
