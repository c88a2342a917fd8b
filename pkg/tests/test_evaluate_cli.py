import csv
import json

import numpy as np
import pytest
from scipy.special import logsumexp

from epvi.cli import main
from epvi.combine import SamplerConfig
from epvi.evaluate import EvalResult, compare_methods, heldout_metrics, predictive_log_likelihood, sweep
from epvi.models import DataShard, LogisticModelConfig, build_model, generate_synthetic, holdout_split
from epvi.nvi import FitConfig


def test_uninformative_draws_give_log_two():
    data, _ = generate_synthetic("logistic", LogisticModelConfig(V=3), 50, 0)
    model = build_model("logistic", LogisticModelConfig(V=3), data)
    draws = np.zeros((7, 4))
    res = heldout_metrics(draws, data, model, "zero")
    assert res.nll == pytest.approx(np.log(2.0))
    assert res.nll_se == pytest.approx(0.0, abs=1e-12)


def test_separable_data_is_classified_perfectly():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = np.array([1.0, 1.0, 0.0, 0.0])  # p(y=1) = sigmoid(-w x), so w > 0 separates
    data = DataShard(X, y)
    model = build_model("logistic", LogisticModelConfig(V=1), data)
    res = heldout_metrics(np.array([[5.0, 0.0], [6.0, 0.0]]), data, model)
    assert res.accuracy == 1.0
    flipped = heldout_metrics(np.array([[-5.0, 0.0]]), data, model)
    assert flipped.accuracy == 0.0


def test_predictive_average_uses_log_mean_exp():
    rng = np.random.default_rng(0)
    data, _ = generate_synthetic("logistic", LogisticModelConfig(V=2), 30, 1)
    model = build_model("logistic", LogisticModelConfig(V=2), data)
    draws = rng.standard_normal((5, 3))
    ll = model.pointwise_log_likelihood(draws, data)
    ref = np.log(np.mean(np.exp(ll), axis=0))
    np.testing.assert_allclose(predictive_log_likelihood(draws, data, model), ref, rtol=1e-12)
    assert np.allclose(ref, logsumexp(ll, axis=0) - np.log(5))


def test_result_validation():
    with pytest.raises(ValueError):
        EvalResult("x", np.inf, 0.0)
    with pytest.raises(ValueError):
        EvalResult("x", 1.0, 0.0, accuracy=1.5)


@pytest.fixture(scope="module")
def split():
    data, _ = generate_synthetic("logistic", LogisticModelConfig(V=4), 2000, 3)
    return holdout_split(data, 0.1, 3)


def test_compare_methods_agree(tmp_path, split):
    train, test = split
    res = compare_methods(train, test, "logistic", LogisticModelConfig(V=4), 3, FitConfig(K=2), tmp_path,
                          sampler=SamplerConfig(R=500, burn_in=500), include_nvi=True, include_subposteriors=True)
    names = [r.method for r in res]
    assert names == ["EPVI_exact", "EPVI_sample", "EPVI_subset", "Subposteriors", "NVI"]
    nll = {r.method: r.nll for r in res}
    assert abs(nll["EPVI_sample"] - nll["NVI"]) < 0.02
    # a single subposterior sees a third of the data and predicts worse than the combination
    assert nll["Subposteriors"] >= nll["EPVI_exact"] - 0.01
    assert all(r.config["M"] == 3 for r in res[:3])


def test_sweep_records_skips_and_appends(tmp_path, split):
    train, test = split
    kw = dict(sampler=SamplerConfig(R=100, burn_in=100), methods=("exact", "sample"), cap=100, include_nvi=False)
    rows = sweep("M", [2, 5], train, test, "logistic", LogisticModelConfig(V=4), 2, FitConfig(K=3), tmp_path, **kw)
    status = {(r["value"], r["method"]): r["status"] for r in rows}
    assert status[(2, "EPVI_exact")] == "ok"
    assert status[(5, "EPVI_exact")] == "skipped"  # 3**5 > cap
    assert status[(5, "EPVI_sample")] == "ok"
    sweep("M", [2], train, test, "logistic", LogisticModelConfig(V=4), 2, FitConfig(K=3), tmp_path, **kw)
    with open(tmp_path / "results.tsv") as fh:
        table = list(csv.DictReader(fh, delimiter="\t"))
    assert len(table) == len(rows) + 2
    assert (tmp_path / "plot_nll_vs_time.tsv").read_text().startswith("method\tM\ttime\tnll")


def test_sweep_rejects_bad_axis(tmp_path, split):
    with pytest.raises(ValueError):
        sweep("R", [1], *split, "logistic", LogisticModelConfig(V=4), 2, FitConfig(), tmp_path)


def test_cli_end_to_end(tmp_path, capsys):
    data, run = str(tmp_path / "data"), str(tmp_path / "run")
    assert main(["gen-data", "--model", "logistic", "--V", "3", "--N", "400", "--out", data]) == 0
    meta = json.loads((tmp_path / "data" / "dataset.json").read_text())
    assert (meta["n_train"], meta["n_test"]) == (360, 40)
    assert main(["fit-all", "--data", data, "--M", "2", "--K", "2", "--out", run]) == 0
    for method in ("exact", "sample", "pairwise"):
        assert main(["combine", "--run", run, "--method", method, "--R", "50", "--S", "100"]) == 0
        assert main(["evaluate", "--run", run, "--data", data, "--method", method]) == 0
    doc = json.loads((tmp_path / "run" / "eval_sample.json").read_text())
    assert doc["method"] == "EPVI_sample" and np.isfinite(doc["nll"])
    ledger = json.loads((tmp_path / "run" / "ledger.json").read_text())
    assert ledger["scalars_communicated"] == 2 * 2 * (4 + 2)
    assert "held-out NLL" in capsys.readouterr().out


def test_cli_full_data_fit(tmp_path):
    data, run = str(tmp_path / "data"), str(tmp_path / "nvi")
    main(["gen-data", "--model", "tlsa", "--N", "60", "--L", "2", "--C", "2", "--V", "8", "--out", data])
    assert main(["fit", "--data", data, "--K", "2", "--max-iters", "50", "--out", run]) == 0
    assert main(["evaluate", "--run", run, "--data", data, "--method", "nvi"]) == 0


def test_cli_usage_error_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["combine", "--method", "median", "--run", "x"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_cli_reports_blowup_and_missing_artifacts(tmp_path, capsys):
    data, run = str(tmp_path / "data"), str(tmp_path / "run")
    main(["gen-data", "--model", "gaussian", "--N", "100", "--out", data])
    main(["fit-all", "--data", data, "--M", "6", "--K", "3", "--max-iters", "20", "--out", run])
    assert main(["combine", "--run", run, "--method", "exact", "--cap", "100"]) == 1
    assert "exponential blowup" in capsys.readouterr().err
    assert main(["evaluate", "--run", run, "--data", data, "--method", "pairwise"]) == 1
    assert "missing combine output" in capsys.readouterr().err


def test_cli_bench(tmp_path):
    out = tmp_path / "bench.tsv"
    assert main(["bench", "--what", "enumerate", "--values", "2", "3", "--K", "2", "--d", "2", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].split("\t")[-1] == "seconds" and len(lines) == 3


def _mc_standard_error(draws, test, model):
    """Delta-method standard error of the mean NLL from finitely many draws."""
    p = np.exp(model.pointwise_log_likelihood(draws, test))
    S = p.shape[0]
    per_point = p.var(axis=0, ddof=1) / (S * p.mean(axis=0) ** 2)
    return np.sqrt(per_point.sum()) / p.shape[1]


def test_doubling_draws_is_within_monte_carlo_error(split):
    from epvi.combine import draw_posterior_samples
    from epvi.nvi import fit

    train, test = split
    cfg = LogisticModelConfig(V=4)
    model = build_model("logistic", cfg, train)
    q, _ = fit(model, FitConfig(K=3))
    rng = np.random.default_rng(0)
    d1, d2 = draw_posterior_samples(q, 1000, rng), draw_posterior_samples(q, 2000, rng)
    gap = abs(heldout_metrics(d1, test, model).nll - heldout_metrics(d2, test, model).nll)
    assert gap < 3 * _mc_standard_error(d1, test, model)


def test_metrics_are_deterministic_per_seed(tmp_path, split):
    train, test = split
    kw = dict(methods=("sample",), sampler=SamplerConfig(R=200, seed=3), seed=3)
    a = compare_methods(train, test, "logistic", LogisticModelConfig(V=4), 2, FitConfig(K=2), tmp_path / "a", **kw)
    b = compare_methods(train, test, "logistic", LogisticModelConfig(V=4), 2, FitConfig(K=2), tmp_path / "b", **kw)
    assert a[0].nll == b[0].nll and a[0].accuracy == b[0].accuracy


def test_k_sweep_parallel_route_is_faster(tmp_path):
    data, _ = generate_synthetic("logistic", LogisticModelConfig(V=10), 20000, 1)
    train, test = holdout_split(data, 0.1, 1)
    rows = sweep("K", [2, 4, 8], train, test, "logistic", LogisticModelConfig(V=10), 10, FitConfig(), tmp_path)
    times = {(r["value"], r["method"]): r["time"] for r in rows if r["status"] == "ok"}
    ratios = {K: times[(K, "NVI")] / times[(K, "EPVI_sample")] for K in (2, 4, 8)}
    assert all(r > 2 for r in ratios.values()), f"full-fit / parallel time by K: {ratios}"
