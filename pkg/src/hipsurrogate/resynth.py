"""Corpus resynthesis: load, plan, splice and write surrogate documents."""

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from sklearn.base import BaseEstimator, TransformerMixin

from . import brat
from ._rng import py_rng
from ._validation import check_bundles, check_choice, check_positive_int, check_probability
from .rewrite import apply_plan, resolve_overlaps
from .strategy import STRATEGY_KINDS, StrategyConfig, plan_document
from .surrogates import OFFSET_SCOPES, CategoryRegistry, OffsetPolicy, PoolCache, Vocabulary

REPORT_HEADER = ("doc_id", "event", "detail")


class InvariantError(RuntimeError):
    """Rewritten output failed a soundness check."""


class Resynthesizer(TransformerMixin, BaseEstimator):
    """Replace annotated PHI with surrogates, chain by chain.

    Parameters
    ----------
    strategy : {"consistent", "random", "markov", "custom"}
    p_new : float or None
        Probability of a fresh surrogate; required for ``"custom"``.
    pool_size : int
        Surrogates per category pool (clamped for small vocabularies).
    seed : int
        Master seed; every document and offset draws from its own substream.
    offset_scope : {"per-corpus", "per-patient", "per-document"}
        Which documents share one date/age/time offset.
    dayfirst : bool
        Read ambiguous numeric dates as D/M/Y.
    registry_path, vocab_dir : path or None
        Override the packaged category registry and word lists.
    check : bool
        Verify every rewritten span extracts to its surrogate.
    """

    def __init__(self, strategy="markov", p_new=None, pool_size=1000, seed=0,
                 offset_scope="per-patient", dayfirst=False, registry_path=None,
                 vocab_dir=None, check=True):
        self.strategy = strategy
        self.p_new = p_new
        self.pool_size = pool_size
        self.seed = seed
        self.offset_scope = offset_scope
        self.dayfirst = dayfirst
        self.registry_path = registry_path
        self.vocab_dir = vocab_dir
        self.check = check

    def fit(self, X=None, y=None):
        """Validate parameters and prepare registry, vocabulary and pool cache.

        Surrogate pools do not depend on the corpus, so ``X`` is only checked.
        """
        if X is not None:
            check_bundles(X)
        check_choice(self.strategy, "strategy", STRATEGY_KINDS)
        if self.p_new is not None:
            check_probability(self.p_new, "p_new")
        check_positive_int(self.pool_size, "pool_size")
        check_positive_int(self.seed, "seed", minimum=0)
        check_choice(self.offset_scope, "offset_scope", OFFSET_SCOPES)
        self.config_ = StrategyConfig(self.strategy, self.p_new, self.pool_size, self.seed)
        self.registry_ = CategoryRegistry.from_config(self.registry_path)
        self.vocab_ = Vocabulary(self.vocab_dir)
        self.pools_ = PoolCache(self.registry_, self.vocab_, self.pool_size, self.seed)
        return self

    def _check_fitted(self):
        if not hasattr(self, "config_"):
            self.fit()

    def offset_policy(self, bundle):
        if self.offset_scope == "per-corpus":
            key = ("corpus",)
        elif self.offset_scope == "per-patient":
            key = ("patient", bundle.effective_patient)
        else:
            key = ("doc", bundle.doc_id)
        return OffsetPolicy.draw(py_rng(self.seed, "offset", *key), self.offset_scope)

    def resynthesize(self, bundle, events=None):
        """Rewrite one bundle; return ``(new_bundle, plan)``."""
        self._check_fitted()
        events = events if events is not None else brat.EventLog()
        kept = resolve_overlaps(bundle.annotations, events, bundle.doc_id)
        if len(kept) != len(bundle.annotations):
            bundle = bundle.with_annotations(kept)
        notes = []
        rng = py_rng(self.seed, "doc", bundle.doc_id)
        plan = plan_document(bundle, self.config_, self.pools_, rng, self.registry_,
                             self.offset_policy(bundle), notes, self.dayfirst)
        for note in notes:
            events.add(bundle.doc_id, "fallback", note)
        out = apply_plan(bundle, plan)
        if self.check:
            verify_rewrite(bundle, out, plan)
        return out, plan

    def transform(self, X):
        """Rewritten copies of the bundles in ``X``; events go to ``report_``."""
        self._check_fitted()
        docs = check_bundles(X)
        events = brat.EventLog()
        out = [self.resynthesize(doc, events)[0] for doc in docs]
        self.report_ = events
        return out


def verify_rewrite(before, after, plan):
    """Raise :class:`InvariantError` unless ``after`` is a sound rewrite of ``before``."""
    planned = {idx: surrogate for idx, _key, surrogate in plan.assignments}
    for idx, rec in enumerate(after.annotations):
        if idx not in planned:
            continue
        if rec.surface != planned[idx]:
            raise InvariantError(f"{after.doc_id}: {rec.id} surface differs from its surrogate")
        if after.text is not None and rec.extract(after.text) != planned[idx]:
            raise InvariantError(f"{after.doc_id}: {rec.id} span does not extract to surrogate")
    if before.text is not None and after.text is not None:
        expected = len(before.text) + sum(
            len(s) - before.annotations[i].length for i, s in planned.items())
        if len(after.text) != expected:
            raise InvariantError(f"{after.doc_id}: rewritten length {len(after.text)} "
                                 f"!= expected {expected}")


@dataclass
class CorpusResult:
    n_docs: int = 0
    n_entities: int = 0
    n_skipped: int = 0
    events: list = field(default_factory=list)
    clamped: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def event_counts(self):
        counts = {}
        for _doc, event, _detail in self.events:
            counts[event] = counts.get(event, 0) + 1
        return dict(sorted(counts.items()))


_WORKER = {}


def _init_worker(estimator, out_dir):
    _WORKER["est"] = estimator
    _WORKER["out"] = out_dir


def _process_doc(task):
    """Load, rewrite and write one document. Returns a result tuple."""
    doc_id, ann_path, txt_path, patient = task
    est, out_dir = _WORKER["est"], _WORKER["out"]
    events = brat.EventLog()
    try:
        bundle = brat.load_bundle(ann_path, txt_path, doc_id, patient, events)
    except (brat.BratParseError, brat.BratLoadError, UnicodeDecodeError, OSError) as exc:
        return doc_id, 0, events.rows, f"{ann_path}: {exc}", {}
    new, _plan = est.resynthesize(bundle, events)
    brat.write_bundle(new, out_dir)
    return doc_id, len(new.annotations), events.rows, None, dict(est.pools_.clamped)


class CorpusError(Exception):
    """A document could not be loaded."""


def resynthesize_corpus(in_dir, out_dir, estimator, patients=None, skip_bad=False, jobs=1):
    """Rewrite every document under ``in_dir`` into ``out_dir``.

    Results do not depend on ``jobs``: each document draws from its own seed
    substream and pools are rebuilt identically in every worker.
    """
    estimator._check_fitted()
    t0 = time.perf_counter()
    tasks = [(doc_id, str(ann), str(txt) if txt else None,
              patients.get(doc_id) if patients else None)
             for doc_id, ann, txt in brat.iter_corpus(in_dir)]
    os.makedirs(out_dir, exist_ok=True)
    t1 = time.perf_counter()
    if jobs > 1 and len(tasks) > 1:
        chunk = max(1, len(tasks) // (jobs * 8))
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(estimator, str(out_dir))) as ex:
            results = list(ex.map(_process_doc, tasks, chunksize=chunk))
    else:
        _init_worker(estimator, str(out_dir))
        results = [_process_doc(t) for t in tasks]
    result = CorpusResult()
    for doc_id, n_ent, rows, error, clamped in results:
        if error is not None:
            if not skip_bad:
                raise CorpusError(error)
            result.n_skipped += 1
            result.events.append((doc_id, "skipped", error))
            continue
        result.n_docs += 1
        result.n_entities += n_ent
        result.events.extend(rows)
        result.clamped.update(clamped)
    result.timings = {"discover": t1 - t0, "resynthesize": time.perf_counter() - t1}
    return result


def write_report(events, path_or_file):
    import csv

    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        w.writerows(events)

    if hasattr(path_or_file, "write"):
        write(path_or_file)
    else:
        with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
            write(fh)


def read_report(path):
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != REPORT_HEADER:
            raise ValueError(f"{path}: unexpected report header")
        return [tuple(row) for row in reader]
