import csv
import json
import subprocess
import sys

from kikuchi.cli import main


def run_cli(*args):
    return main(list(args))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def without_meta(d):
    d = dict(d)
    d.pop("meta", None)
    return json.dumps(d, sort_keys=True)


def test_gen_writes_instance(tmp_path):
    out = tmp_path / "inst.json"
    rc = run_cli("gen", "--n", "12", "--q", "3", "--k", "4", "--delta", "0.25",
                 "--seed", "1", "--out", str(out))
    assert rc == 0
    d = read_json(out)
    assert d["n"] == 12 and d["k"] == 4
    assert len(d["hypergraphs"]) == 4
    assert all(len(h) == 3 for h in d["hypergraphs"])
    assert d["master_seed"] == 1


def test_gen_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        run_cli("gen", "--n", "10", "--q", "3", "--k", "3", "--delta", "0.2",
                "--seed", "5", "--out", str(out))
    assert without_meta(read_json(a)) == without_meta(read_json(b))


def test_gen_planted_sidecar(tmp_path):
    out = tmp_path / "planted.json"
    rc = run_cli("gen", "--n", "12", "--q", "3", "--k", "4", "--delta", "0.16",
                 "--planted", "--seed", "2", "--out", str(out))
    assert rc == 0
    side = tmp_path / "planted.generator.json"
    assert side.exists()
    assert read_json(side)["k"] == 4


def test_gen_invalid_config(tmp_path):
    rc = run_cli("gen", "--n", "6", "--q", "3", "--k", "2", "--delta", "1.0",
                 "--out", str(tmp_path / "x.json"))
    assert rc == 2


def test_decompose_roundtrip(tmp_path):
    inst = tmp_path / "inst.json"
    dec = tmp_path / "dec.json"
    run_cli("gen", "--n", "12", "--q", "3", "--k", "5", "--delta", "0.25",
            "--seed", "3", "--out", str(inst))
    rc = run_cli("decompose", "--in", str(inst), "--out", str(dec), "--ell", "1")
    assert rc == 0
    d = read_json(dec)
    assert "leftover" in d and "registries" in d and "provenance" in d


def test_refute_and_verify(tmp_path):
    inst = tmp_path / "inst.json"
    cert = tmp_path / "cert.json"
    run_cli("gen", "--n", "10", "--q", "3", "--k", "4", "--delta", "0.2",
            "--seed", "4", "--out", str(inst))
    rc = run_cli("refute", "--in", str(inst), "--out", str(cert),
                 "--epsilon", "0.1", "--ell", "1", "--partitions", "2",
                 "--seed", "7", "--soundness")
    assert rc == 0
    c = read_json(cert)
    assert c["schema_version"] == 1
    assert all(e["ok"] for e in c["soundness_log"])
    rc = run_cli("verify", "--in", str(inst), "--cert", str(cert),
                 "--exhaustive-b")
    assert rc == 0


def test_refute_deterministic(tmp_path):
    inst = tmp_path / "inst.json"
    run_cli("gen", "--n", "10", "--q", "3", "--k", "4", "--delta", "0.2",
            "--seed", "4", "--out", str(inst))
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        run_cli("refute", "--in", str(inst), "--out", str(out), "--ell", "1",
                "--partitions", "2", "--seed", "9")
    assert without_meta(read_json(a)) == without_meta(read_json(b))


def test_verify_detects_tampering(tmp_path):
    inst = tmp_path / "inst.json"
    cert = tmp_path / "cert.json"
    run_cli("gen", "--n", "10", "--q", "3", "--k", "3", "--delta", "0.2",
            "--seed", "4", "--out", str(inst))
    run_cli("refute", "--in", str(inst), "--out", str(cert), "--ell", "1",
            "--partitions", "2", "--seed", "7")
    c = read_json(cert)
    c["combined_bound"] = c["combined_bound"] * 0.5
    with open(cert, "w") as fh:
        json.dump(c, fh)
    rc = run_cli("verify", "--in", str(inst), "--cert", str(cert))
    assert rc == 1


def test_sweep_planted_rows_never_refuted(tmp_path):
    out = tmp_path / "planted_sweep.csv"
    rc = run_cli("sweep", "--n", "12", "--q", "3", "--delta", "0.16",
                 "--k-list", "3,4", "--seeds", "2", "--ell", "1",
                 "--epsilon", "0.5", "--planted", "--out", str(out))
    assert rc == 0
    with open(out) as fh:
        fh.readline()
        rows = list(csv.DictReader(fh))
    assert rows and all(
        r["verdict"] == "not refuted" for r in rows if not r["error"]
    )


def test_build_graph_dump(tmp_path):
    inst = tmp_path / "inst.json"
    out = tmp_path / "graph.json"
    run_cli("gen", "--n", "9", "--q", "3", "--k", "3", "--delta", "0.2",
            "--seed", "8", "--out", str(inst))
    rc = run_cli("build", "--in", str(inst), "--variant", "regular_cs",
                 "--ell", "1", "--out", str(out))
    assert rc == 0
    d = read_json(out)
    assert d["variant"] == "regular_cs"
    assert all(len(e) == 3 for e in d["edges"])
    rc = run_cli("build", "--in", str(inst), "--ell", "1",
                 "--out", str(tmp_path / "naive.json"))
    assert rc == 0
    assert read_json(tmp_path / "naive.json")["variant"] == "naive_odd"


def test_missing_file_is_io_error(tmp_path):
    rc = run_cli("oracle", "--in", str(tmp_path / "nope.json"))
    assert rc == 3


def test_oracle_signs_and_expectation(tmp_path, capsys):
    inst = tmp_path / "inst.json"
    run_cli("gen", "--n", "9", "--q", "3", "--k", "2", "--delta", "0.2",
            "--seed", "6", "--out", str(inst))
    capsys.readouterr()  # drop gen output
    rc = run_cli("oracle", "--in", str(inst), "--signs", "1,-1")
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert "val" in out and "argmax_x" in out
    rc = run_cli("oracle", "--in", str(inst))
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert "expected_val" in out and out["stderr"] == 0.0


def test_sweep_rows(tmp_path):
    out = tmp_path / "sweep.csv"
    rc = run_cli("sweep", "--n", "10", "--q", "3", "--delta", "0.2",
                 "--k-list", "2,3", "--seeds", "2", "--ell", "1",
                 "--out", str(out))
    assert rc == 0
    with open(out) as fh:
        header = fh.readline()
        assert header.startswith("# kikuchi")
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert {r["k"] for r in rows} == {"2", "3"}
    for r in rows:
        if not r["error"]:
            assert r["verdict"] in ("refuted", "not refuted")


def test_build_bipartite_instance_file(tmp_path):
    from kikuchi.instances import dump_instance, generate_random_bipartite_instance

    piece = generate_random_bipartite_instance(8, 3, 2, 2, edges_per=2,
                                               p_size=5, seed=4)
    inst = tmp_path / "bip.json"
    dump_instance(piece, inst)
    out = tmp_path / "graph.json"
    rc = run_cli("build", "--in", str(inst), "--ell", "2", "--out", str(out))
    assert rc == 0
    assert read_json(out)["variant"] == "bipartite"


def test_entrypoint_subprocess(tmp_path):
    out = tmp_path / "inst.json"
    proc = subprocess.run(
        [sys.executable, "-m", "kikuchi.cli", "gen", "--n", "9", "--q", "3",
         "--k", "2", "--delta", "0.2", "--seed", "1", "--out", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert out.exists()


def test_refute_deterministic_across_processes(tmp_path):
    inst = tmp_path / "inst.json"
    run_cli("gen", "--n", "10", "--q", "3", "--k", "4", "--delta", "0.2",
            "--seed", "4", "--out", str(inst))
    outs = []
    for name in ("p1.json", "p2.json"):
        out = tmp_path / name
        proc = subprocess.run(
            [sys.executable, "-m", "kikuchi.cli", "refute", "--in", str(inst),
             "--out", str(out), "--ell", "1", "--partitions", "2",
             "--seed", "11"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        outs.append(without_meta(read_json(out)))
    assert outs[0] == outs[1]
