import itertools
import json
import math
import random

import pytest

import deepdtf


def test_parse_smiles_benzene():
    g = deepdtf.parse_smiles("c1ccccc1")
    assert len(g["nodes"]) == 6
    assert len(g["edges"]) == 12
    assert all(len(row) == 9 for row in g["nodes"])


def test_parse_error_carries_offset():
    with pytest.raises(deepdtf.ParseError, match="offset"):
        deepdtf.parse_smiles("C1CC")
    assert issubclass(deepdtf.ParseError, deepdtf.DeepDTFError)


def test_molecular_weight_of_water():
    assert deepdtf.molecular_weight("O") == pytest.approx(18.015, abs=0.01)


def test_metrics_against_direct_formulas():
    rng = random.Random(4)
    y = [rng.gauss(0, 1) for _ in range(30)]
    y_hat = [v + rng.gauss(0, 0.3) for v in y]
    direct = math.sqrt(sum((a - b) ** 2 for a, b in zip(y_hat, y)) / len(y))
    assert deepdtf.rmse(y_hat, y) == pytest.approx(direct, rel=1e-12)
    p = [0.1, 0.4, 0.35, 0.8]
    t = [0, 0, 1, 1]
    assert deepdtf.auc(p, t) == 0.75
    with pytest.raises(deepdtf.UndefinedMetricError):
        deepdtf.auc(p, [1, 1, 1, 1])


def test_preprocessing_helpers():
    assert deepdtf.binarize_response(-2.0) == 0
    assert deepdtf.binarize_response(-2.0000001) == 1
    assert deepdtf.asw_integrate([0.5], [0.1]) == pytest.approx([0.6])


def test_enrichment_score_extremes():
    scores = [2.0, 1.5, 1.2, 0.9, 0.5, 0.1, -0.3, -0.8, -1.1, -2.5]
    top = [i < 3 for i in range(10)]
    bottom = [i >= 7 for i in range(10)]
    assert deepdtf.enrichment_score(scores, top) == 1.0
    assert deepdtf.enrichment_score(scores, bottom) == -1.0


def test_gsea_finds_top_set():
    ranking = [(f"g{i}", 3.0 - 0.1 * i) for i in range(40)]
    report = deepdtf.gsea_preranked(ranking, {"top": [f"g{i}" for i in range(6)]}, permutations=200, seed=1)
    (res,) = report["results"]
    assert res["es"] == 1.0
    assert res["direction"] == "sensitivity"
    assert res["p_value"] < 0.05


def test_exact_shapley_matches_orderings():
    def f(x):
        return math.sin(x[0]) * x[1] + x[2] ** 2

    sample = [0.3, -0.7, 1.1]
    background = [[0.0, 0.2, -0.5], [1.0, -1.0, 0.4]]
    groups = [[0], [1], [2]]
    a = deepdtf.exact_shapley(f, sample, background, groups)

    def v(members):
        total = 0.0
        for b in background:
            z = [sample[i] if i in members else b[i] for i in range(3)]
            total += f(z)
        return total / len(background)

    phi = [0.0] * 3
    orders = list(itertools.permutations(range(3)))
    for order in orders:
        seen = set()
        for i in order:
            before = v(seen)
            seen.add(i)
            phi[i] += (v(seen) - before) / len(orders)
    assert a["phi"] == pytest.approx(phi, abs=1e-12)
    assert a["phi0"] + sum(a["phi"]) == pytest.approx(f(sample), abs=1e-12)


def test_cli_parse_smiles_and_usage(tmp_path):
    code, out, _ = deepdtf.run_cli(["parse-smiles", "CCO"])
    assert code == 0
    assert json.loads(out)["num_nodes"] == 3
    code, _, _ = deepdtf.run_cli(["train", "--no-such-flag"])
    assert code == 2
    code, _, err = deepdtf.run_cli(["split", "--out", str(tmp_path)])
    assert code == 5
    assert "prepare" in err
