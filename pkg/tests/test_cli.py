import csv
import json
from pathlib import Path

import pytest

from hipsurrogate import brat, cli, leakage, resynth
from hipsurrogate.bench import write_corpus
from hipsurrogate.brat import AnnotationRecord, DocumentBundle


def run(argv):
    try:
        return cli.main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


def _tree_bytes(root):
    root = Path(root)
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def _manifest(path):
    m = json.loads(Path(path).read_text())
    m.pop("timings")
    return m


TABLE1 = ("Jane Doe was admitted. Doe reports pain. Jane Doe is stable. Ms. Jane Doe "
          "asked about Jane Doe and her MRN 00123456. Jane Doe left on 01/02/2014.\n")


@pytest.fixture
def corpus(tmp_path):
    d = tmp_path / "in"
    write_corpus(d, 12, 120, 8, seed=4)
    text = TABLE1
    recs, pos = [], 0
    for k in range(6):
        if k == 1:
            start = text.index("Doe reports")
            recs.append(AnnotationRecord(f"T{k + 1}", "PATIENT", ((start, start + 3),), "Doe"))
            continue
        start = text.index("Jane Doe", pos)
        recs.append(AnnotationRecord(f"T{k + 1}", "PATIENT", ((start, start + 8),), "Jane Doe"))
        pos = start + 8
    mrn = text.index("00123456")
    recs.append(AnnotationRecord("T7", "MEDICALRECORD", ((mrn, mrn + 8),), "00123456"))
    brat.write_bundle(DocumentBundle("table1", tuple(recs), text), d)
    return d


def test_resynth_writes_sound_corpus(corpus, tmp_path):
    out = tmp_path / "out"
    assert run(["resynth", corpus, out, "--seed", 1]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["counts"]["documents"] == 13 and m["seed"] == 1
    for doc_id, ann, txt in brat.iter_corpus(corpus):
        before = brat.load_bundle(ann, txt, doc_id)
        after = brat.load_bundle(out / f"{doc_id}.ann", out / f"{doc_id}.txt", doc_id)
        assert len(after.annotations) == len(before.annotations)
        for a, b in zip(before.annotations, after.annotations):
            assert b.extract(after.text) == b.surface
            assert b.surface.casefold() != a.surface.casefold()
    assert resynth.read_report(out / "report.csv") == []


def test_resynth_deterministic_across_jobs(corpus, tmp_path):
    assert run(["resynth", corpus, tmp_path / "a", "--seed", 7]) == 0
    assert run(["resynth", corpus, tmp_path / "b", "--seed", 7, "--jobs", 3]) == 0
    a, b = _tree_bytes(tmp_path / "a"), _tree_bytes(tmp_path / "b")
    ma, mb = _manifest(tmp_path / "a/manifest.json"), _manifest(tmp_path / "b/manifest.json")
    a.pop("manifest.json"), b.pop("manifest.json")
    assert a == b
    ma["config"].pop("jobs"), mb["config"].pop("jobs")
    ma["outputs"] = mb["outputs"] = None
    assert ma == mb
    assert run(["resynth", corpus, tmp_path / "c", "--seed", 8]) == 0
    assert _tree_bytes(tmp_path / "c")["table1.txt"] != a["table1.txt"]


def test_resynth_empty_and_bad(tmp_path):
    (tmp_path / "empty").mkdir()
    assert run(["resynth", tmp_path / "empty", tmp_path / "o1", "--seed", 1]) == 0
    m = json.loads((tmp_path / "o1/manifest.json").read_text())
    assert m["counts"] == {"documents": 0, "entities": 0, "skipped": 0}
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "x.txt").write_text("tiny", encoding="utf-8")
    (bad / "x.ann").write_text("T1\tPATIENT 0 99\tx\n", encoding="utf-8")
    (bad / "y.txt").write_text("Bob", encoding="utf-8")
    (bad / "y.ann").write_text("T1\tPATIENT 0 3\tBob\n", encoding="utf-8")
    assert run(["resynth", bad, tmp_path / "o2", "--seed", 1]) == 2
    assert run(["resynth", bad, tmp_path / "o3", "--seed", 1, "--skip-bad-docs"]) == 0
    events = resynth.read_report(tmp_path / "o3/report.csv")
    assert events[0][:2] == ("x", "skipped") and "x.ann" in events[0][2]
    assert (tmp_path / "o3/y.ann").exists()


def test_usage_errors(tmp_path):
    assert run([]) == 1
    assert run(["simulate", "--fner"]) == 1
    assert run(["resynth", tmp_path, tmp_path / "o", "--strategy", "markov",
                "--p-new", "0.2"]) == 1
    assert run(["simulate", "--synthetic", "mimic", "--strategies", "custom",
                "--seed", 1]) == 1
    assert run(["analytic", "--epd", "15"]) == 1
    assert run(["stats", tmp_path / "missing"]) == 2


def test_simulate_and_self_ingestion(tmp_path):
    dist = tmp_path / "d.csv"
    out = tmp_path / "leak.csv"
    hist = tmp_path / "h.csv"
    assert run(["simulate", "--synthetic", "mimic", "--n-docs", 200, "--runs", 20,
                "--seed", 3, "--dist-out", dist, "--out", out, "--histogram", hist,
                "--histogram-runs", 5]) == 0
    rows = leakage.read_leak_csv(out)
    assert len(rows) == 12
    series = leakage.read_histogram_csv(hist)
    assert set(series) >= {"max_repeat/markov", "fn_count/0.01"}
    again = tmp_path / "leak2.csv"
    assert run(["simulate", dist, "--runs", 20, "--seed", 3, "--out", again]) == 0
    assert again.read_bytes() == out.read_bytes()
    par = tmp_path / "leak3.csv"
    assert run(["simulate", dist, "--runs", 20, "--seed", 3, "--jobs", 4, "--out", par]) == 0
    assert par.read_bytes() == out.read_bytes()
    assert json.loads(Path(f"{out}.manifest.json").read_text())["counts"]["rows"] == 12


def test_simulate_bad_csv_reports_row(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("doc_id,patient_id,category,critical,mention_count\na,a,X,true,zero\n")
    assert run(["simulate", bad, "--seed", 1]) == 2
    assert "row 2" in capsys.readouterr().err


def test_config_precedence(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[DEFAULT]\nseed = 5\n\n[simulate]\nruns = 3\nfner = 0.01, 0.05\n"
                   "strategies = consistent\nsynthetic = mimic\nn-docs = 50\n")
    out = tmp_path / "a.csv"
    assert run(["simulate", "--config", cfg, "--out", out, "--runs", 4]) == 0
    m = json.loads(Path(f"{out}.manifest.json").read_text())
    assert m["config"]["runs"] == 4 and m["config"]["fner"] == [0.01, 0.05]
    assert m["seed"] == 5 and m["seed_source"] == "given"
    assert len(leakage.read_leak_csv(out)) == 2
    cfg.write_text("[simulate]\nbogus = 1\n")
    assert run(["simulate", "--config", cfg]) == 1


def test_entropy_seed_recorded(tmp_path):
    out = tmp_path / "a.csv"
    assert run(["analytic", "--epd", 15, "--fner", 0.01, "--docs", 10, "--out", out]) == 0
    m = json.loads(Path(f"{out}.manifest.json").read_text())
    assert m["seed_source"] == "entropy" and isinstance(m["seed"], int)


def test_analytic_presets(tmp_path):
    out = tmp_path / "a.csv"
    assert run(["analytic", "--fig4-5pct", "--out", out, "--seed", 1]) == 0
    rows = cli.read_analytic_csv(out)
    assert {r.entities_per_doc for r in rows} == {5, 25, 50}
    assert len(rows) == 3 * 3 * 30
    assert run(["analytic", "--epd", 15, "--fner", 0.01, "--docs", 10, "--threshold",
                "consistent=0", "--out", out, "--seed", 1]) == 0
    assert len(cli.read_analytic_csv(out)) == 1


def test_stats_report_and_export(tmp_path, capsys):
    d = tmp_path / "c"
    for i, n in enumerate([2, 5, 11]):
        text = "x " * n
        recs = tuple(AnnotationRecord(f"T{k + 1}", "PATIENT", ((2 * k, 2 * k + 1),), "x")
                     for k in range(n))
        brat.write_bundle(DocumentBundle(f"d{i}", recs, text), d)
    brat.write_bundle(DocumentBundle("d3", (AnnotationRecord("T1", "DOCTOR", ((0, 1),), "y"),),
                                     "y"), d)
    export = tmp_path / "dist.csv"
    assert run(["stats", d, "--export", export, "--seed", 1, "--manifest",
                tmp_path / "m.json"]) == 0
    report = capsys.readouterr().out
    assert "4.5" in report and "0-11" in report
    assert run(["stats", export, "--seed", 1, "--manifest", tmp_path / "m2.json"]) == 0
    assert capsys.readouterr().out == report
    with open(export, newline="") as fh:
        assert next(csv.reader(fh)) == list(leakage.DIST_HEADER)


def test_bench_small(tmp_path):
    out = tmp_path / "b.json"
    assert run(["bench", "--n-docs", 3, "--entities-per-doc", 0, "--seed", 1,
                "--out", out]) == 0
    rep = json.loads(out.read_text())
    assert rep["n_docs"] == 3 and rep["n_entities"] == 0
