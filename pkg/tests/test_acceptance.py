"""Acceptance suite.

Each test enforces one criterion at its stated tolerance and prints a
PASS/FAIL line (run with ``pytest -s`` to see the lines as they go). The
probe-dependent criteria run the real CLI pipeline on synthetic Gaussian
families; everything is desk-scale and deterministic.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from fsgt.cascade import CascadeConfig, compute_active_set, relax_step, run_cascade
from fsgt.cli import main
from fsgt.config import load_config
from fsgt.graphs import GraphKey, build_ba_graph
from fsgt.nulls import NullVariant, decompose, generate_null
from fsgt.bridge import LrSchedule, lr_partial_pearson, pearson, reconstruct_lr
from fsgt.reference import reference_cascade, reference_quantile
from fsgt.scaling import (
    StepSkip,
    TransportRecord,
    fit_step,
    loglog_fit,
    window_summary,
)

from conftest import (
    engine_active_sequence,
    instance_field,
    instance_graphs,
    make_snapshot,
    oracle_instances,
)

A1_SCALES = (100_000, 200_000, 400_000, 800_000)
A2_SCALES = (25_000, 50_000, 100_000)
A2_SEEDS = (41, 42, 43, 44, 45)
A11_SCALES = (10_000, 20_000, 40_000)

CONFIG_TEMPLATE = """
[run]
family = {family}
snapshot_root = {snapshot_root}
cache_dir = {cache_dir}
out_dir = {out_dir}

[probe]
alpha = 0.3
q_threshold = 0.90
max_steps = 500

[graph]
m = 2
seed = {graph_seed}

[nulls]
variants = {variants}

[fit]
scales = {scales}
window = {window}
rolling_window = 3

[synth]
scales = {scales}
steps = {steps}
seed = {synth_seed}
kind = gaussian
{extra}
"""


def report(cid: str, ok: bool, detail: str = "") -> None:
    print(f"[{cid}] {'PASS' if ok else 'FAIL'} {detail}".rstrip())
    assert ok, f"{cid}: {detail}"


def make_run(
    root: Path,
    family: str,
    scales,
    steps,
    graph_seed: int = 42,
    variants: str = "",
    synth_seed: int = 7,
    window=None,
    extra: str = "",
    shared_cache: Path | None = None,
    snapshot_root: Path | None = None,
) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    window = window or (min(steps), max(steps))
    text = CONFIG_TEMPLATE.format(
        family=family,
        snapshot_root=snapshot_root or (root / "snaps"),
        cache_dir=shared_cache or (root / "cache"),
        out_dir=root / "out",
        graph_seed=graph_seed,
        variants=variants,
        scales=", ".join(str(s) for s in scales),
        steps=", ".join(str(s) for s in steps),
        synth_seed=synth_seed,
        window=f"{window[0]}, {window[1]}",
        extra=extra,
    )
    path = root / "run.ini"
    path.write_text(text)
    return path


def run_cli(*args: str) -> None:
    code = main(list(args))
    assert code == 0, f"fsgt {' '.join(args)} exited {code}"


@pytest.fixture(scope="session")
def accept_root(tmp_path_factory) -> Path:
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="session")
def shared_cache(accept_root) -> Path:
    return accept_root / "graph_cache"


@pytest.fixture(scope="session")
def a1_run(accept_root, shared_cache):
    """Gaussian-null baseline family at the A1 ladder; synth+probe+fit."""
    root = accept_root / "a1"
    config_path = make_run(
        root,
        "gaussbase",
        A1_SCALES,
        steps=(1, 2, 3, 4, 5),
        shared_cache=shared_cache,
    )
    t0 = time.time()
    run_cli("synth", "--config", str(config_path))
    run_cli("probe", "--config", str(config_path))
    run_cli("fit", "--config", str(config_path))
    elapsed = time.time() - t0
    return config_path, load_config(config_path), elapsed


@pytest.fixture(scope="session")
def a2_runs(accept_root, shared_cache):
    """The A1 recipe capped at N=1e5, repeated over topology seeds 41-45."""
    runs = []
    t0 = time.time()
    snapshot_root = accept_root / "a2" / "snaps"
    first = True
    for seed in A2_SEEDS:
        root = accept_root / "a2" / f"seed{seed}"
        config_path = make_run(
            root,
            "gausstopo",
            A2_SCALES,
            steps=(1, 2, 3, 4, 5),
            graph_seed=seed,
            shared_cache=shared_cache,
            snapshot_root=snapshot_root,
        )
        if first:
            run_cli("synth", "--config", str(config_path))
            first = False
        run_cli("probe", "--config", str(config_path))
        run_cli("fit", "--config", str(config_path))
        runs.append((config_path, load_config(config_path)))
    return runs, time.time() - t0


BRIDGE_EXTRA = """
[bridge]
metric_file = metrics.csv
metric_kind = perplexity
floor = 1e-6
schedule_kind = linear_warmup_linear
eta_max = 0.001
eta_min = 0.0001
t_warm = 1
t_total = 10
"""


def full_run(root: Path, shared_cache: Path, resume_probe: bool = False) -> Path:
    """synth -> probe -> fit -> bridge for the determinism family."""
    config_path = make_run(
        root,
        "detfam",
        A11_SCALES,
        steps=(1, 2, 3, 4),
        variants="n0, n2",
        shared_cache=shared_cache,
        extra=BRIDGE_EXTRA,
    )
    rows = ["model_id,n,step,value"]
    for n in A11_SCALES:
        for step in (1, 2, 3, 4):
            rows.append(f"n{n},{n},{step},{100.0 / n ** 0.25 + 0.5 * step}")
    (root / "metrics.csv").write_text("\n".join(rows) + "\n")
    run_cli("synth", "--config", str(config_path))
    run_cli("probe", "--config", str(config_path))
    if resume_probe:
        victims = sorted((root / "out" / "dynamics").glob("*__n0.json"))
        for victim in victims[:2]:
            victim.unlink()
        run_cli("probe", "--config", str(config_path))
    run_cli("fit", "--config", str(config_path))
    run_cli("bridge", "--config", str(config_path))
    return config_path


def tree_bytes(root: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


@pytest.fixture(scope="session")
def a11_runs(accept_root, shared_cache):
    roots = [accept_root / "a11" / name for name in ("run1", "run2", "resumed")]
    full_run(roots[0], shared_cache)
    full_run(roots[1], shared_cache)
    full_run(roots[2], shared_cache, resume_probe=True)
    return roots


def load_fits(config, variant="real") -> list[dict]:
    path = config.out_dir / "fits" / f"{config.family}__{variant}__fits.json"
    return json.loads(path.read_text())["fits"]


class TestA1GaussianSizeBaseline:
    def test_a1(self, a1_run):
        config_path, config, elapsed = a1_run
        fits = load_fits(config)
        assert len(fits) == 5
        worst_d = max(abs(f["d"] - 1.0) for f in fits)
        worst_r2 = min(f["r2_d"] for f in fits)
        ok = worst_d <= 0.05 and worst_r2 >= 0.99 and elapsed < 300
        report(
            "A1",
            ok,
            f"max|D-1|={worst_d:.4f} (<=0.05), min r2_d={worst_r2:.5f} "
            f"(>=0.99), runtime {elapsed:.1f}s (<300s)",
        )


class TestA2TopologyInsensitivity:
    def test_a2(self, a2_runs):
        runs, elapsed = a2_runs
        mean_ds = []
        for _, config in runs:
            fits = load_fits(config)
            assert len(fits) == 5
            mean_ds.append(float(np.mean([f["d"] for f in fits])))
        arr = np.asarray(mean_ds)
        cv = float(np.std(arr, ddof=1) / np.mean(arr))
        ok = cv < 0.01 and elapsed < 300
        report(
            "A2",
            ok,
            f"D per seed {[round(d, 4) for d in mean_ds]}, CV={cv:.2%} (<1%), "
            f"runtime {elapsed:.1f}s (<300s)",
        )


class TestA3ClosureIdentity:
    def test_a3(self, a1_run, a2_runs, a11_runs):
        _, a1_config, _ = a1_run
        configs = [a1_config] + [c for _, c in a2_runs[0]]
        fit_lists = [load_fits(c) for c in configs]
        for root in a11_runs:
            for path in sorted((root / "out" / "fits").glob("*__fits.json")):
                fit_lists.append(json.loads(path.read_text())["fits"])
        n_checked = 0
        worst = 0.0
        for fits in fit_lists:
            for f in fits:
                worst = max(
                    worst,
                    abs(f["beta"] - (f["d"] - f["z"])),
                    abs(f["delta"] - (f["beta"] - 1.0)),
                )
                n_checked += 1
        ok = n_checked > 0 and worst <= 1e-9
        report(
            "A3", ok, f"{n_checked} fits, max closure residual {worst:.2e} (<=1e-9)"
        )


class TestA4OracleEquivalence:
    def test_a4(self):
        config = CascadeConfig(record_trace=True)
        instances = oracle_instances()
        assert len(instances) == 100
        mismatches = []
        for inst in instances:
            field = instance_field(inst)
            ref_graph, probe = instance_graphs(inst)
            ref_result, ref_seq = reference_cascade(field, ref_graph, config)
            eng_result = run_cascade(make_snapshot(field), probe, config)
            _, eng_seq = engine_active_sequence(field, probe, config)
            if (
                eng_result.s_max != ref_result.s_max
                or eng_result.n_steps != ref_result.n_steps
                or eng_seq != ref_seq
            ):
                mismatches.append(inst["id"])
        report(
            "A4",
            not mismatches,
            f"100 seeded instances (BA + arbitrary graphs), mismatches: "
            f"{mismatches or 'none'}",
        )


class TestA5Conservation:
    @staticmethod
    def _max_violation(values, probe, config) -> float:
        u = np.asarray(values, dtype=np.float64)
        tau = reference_quantile(u, config.q_threshold)
        budget = 1e-6 * float(np.abs(u).sum())
        worst = 0.0
        for _ in range(config.max_steps):
            active = compute_active_set(u, tau)
            if active.size == 0:
                break
            nxt = relax_step(u, active, probe, config.alpha)
            drift = abs(float(nxt.sum()) - float(u.sum()))
            worst = max(worst, 0.0 if budget == 0 else drift / budget)
            u = nxt
        return worst

    def test_a5(self):
        config = CascadeConfig()
        worst = 0.0
        for inst in oracle_instances():
            _, probe = instance_graphs(inst)
            worst = max(
                worst, self._max_violation(instance_field(inst), probe, config)
            )
        big = build_ba_graph(GraphKey(100_000, 2, 42))
        rng = np.random.default_rng(31)
        worst = max(
            worst,
            self._max_violation(rng.standard_normal(100_000), big, config),
        )
        report(
            "A5",
            worst <= 1.0,
            f"max |sum drift| = {worst:.3e} of the 1e-6*sum|u0| budget "
            "(100 instances + N=1e5 gaussian)",
        )


class TestA6RescalingInvariance:
    def test_a6(self):
        config = CascadeConfig(record_trace=True)
        probe = build_ba_graph(GraphKey(1024, 2, 42))
        rng = np.random.default_rng(99)
        base = rng.standard_normal(1024).astype(np.float32)
        ref_res = run_cascade(make_snapshot(base, step=2), probe, config)
        _, ref_seq = engine_active_sequence(base, probe, config, step=2)
        assert ref_res.n_steps > 1, "fixture should cascade for several steps"
        bad = []
        for k in range(-8, 9):
            scaled = (base * np.float32(2.0**k)).astype(np.float32)
            res = run_cascade(make_snapshot(scaled, step=2), probe, config)
            _, seq = engine_active_sequence(scaled, probe, config, step=2)
            if (
                res.s_max != ref_res.s_max
                or res.n_steps != ref_res.n_steps
                or res.activity_trace != ref_res.activity_trace
                or seq != ref_seq
            ):
                bad.append(k)
        report(
            "A6",
            not bad,
            f"2^k scaling for k in -8..8 bitwise-identical, failures: {bad or 'none'}",
        )


class TestA7SubsampledQuantile:
    def test_a7(self):
        t0 = time.time()
        rng = np.random.default_rng(1234)
        values = rng.lognormal(0.0, 1.0, 20_000_000)
        from fsgt.snapshots import field_quantile

        full = reference_quantile(values, 0.9)
        sub = field_quantile(values, 0.9, subsample_cap=10_000_000, seed=77)
        rel = abs(sub - full) / full
        elapsed = time.time() - t0
        ok = rel < 1e-3 and elapsed < 60
        report(
            "A7",
            ok,
            f"2e7 lognormal, cap 1e7: rel err {rel:.2e} (<1e-3), "
            f"runtime {elapsed:.1f}s (<60s)",
        )


class TestA8NullSuite:
    def test_a8(self):
        rng = np.random.default_rng(5)
        snap = make_snapshot(rng.standard_normal(10_000), step=137)

        n2a = generate_null(snap, NullVariant.N2)
        n2b = generate_null(snap, NullVariant.N2)
        multiset_ok = np.array_equal(
            np.sort(n2a.values.view(np.uint32)),
            np.sort(snap.values.view(np.uint32)),
        )

        determinism_ok = True
        for variant in (NullVariant.N0, NullVariant.N1, NullVariant.N2):
            a = generate_null(snap, variant)
            b = generate_null(snap, variant)
            determinism_ok &= np.array_equal(
                a.values.view(np.uint32), b.values.view(np.uint32)
            )
            determinism_ok &= a.manifest.seed == 42 + 137
        determinism_ok &= np.array_equal(
            n2a.values.view(np.uint32), n2b.values.view(np.uint32)
        )

        triple_rng = np.random.default_rng(8)
        identity_ok = True
        for _ in range(1000):
            x_real, x_n0, x_n2 = triple_rng.uniform(-1e6, 1e6, 3)
            d = decompose(x_real, x_n0, x_n2)
            identity_ok &= d.total == d.dist + d.assign

        ok = multiset_ok and determinism_ok and identity_ok
        report(
            "A8",
            ok,
            f"n2 multiset bitwise={multiset_ok}, null determinism (seed 42+t)="
            f"{determinism_ok}, 1000 decomposition identities exact={identity_ok}",
        )


class TestA9StatisticsOracles:
    def test_a9(self):
        slope, intercept, r2 = loglog_fit([1.0, 10.0, 100.0], [1.0, 10.0, 10.0])
        fit_ok = (
            abs(slope - 0.5) <= 1e-12
            and abs(intercept - 1.0 / 6.0) <= 1e-12
            and abs(r2 - 0.75) <= 1e-12
        )

        r_pos = pearson([1.0, 2.0, 3.0], [2.0, 4.0, 6.0]).r
        r_neg = pearson([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]).r
        half = pearson([1.0, 2.0, 3.0], [1.0, 3.0, 2.0])
        pearson_ok = (
            abs(r_pos - 1.0) <= 1e-12
            and abs(r_neg + 1.0) <= 1e-12
            and abs(half.r - 0.5) <= 1e-12
            and abs(half.p - 2.0 / 3.0) <= 1e-12
        )

        sched = LrSchedule("linear_warmup_cosine", 1e-3, 1e-4, 10, 100)
        steps = list(range(10, 30))
        eta = [reconstruct_lr(sched, t) for t in steps]
        x = np.random.default_rng(3).standard_normal(len(steps))
        partial = lr_partial_pearson(x, eta, eta)
        partial_ok = partial.degenerate and partial.r == 0.0

        ok = fit_ok and pearson_ok and partial_ok
        report(
            "A9",
            ok,
            f"loglog (0.5, 1/6, 0.75) to 1e-12: {fit_ok}; pearson r=1/-1/0.5 "
            f"to 1e-12: {pearson_ok}; y==eta degenerate rule: {partial_ok}",
        )


class TestA10DegeneracyHandling:
    def test_a10(self):
        # forced ceiling: tau = 0 star field never quiesces
        g = build_ba_graph(GraphKey(12, 1, 3))
        vals = np.zeros(12, dtype=np.float32)
        vals[0] = 100.0
        ceiling_res = run_cascade(
            make_snapshot(vals, model_id="nceil"),
            g,
            CascadeConfig(max_steps=3),
        )
        ceiling_ok = ceiling_res.ceiling_limited and ceiling_res.n_steps == 3

        zero_res = run_cascade(
            make_snapshot(np.zeros(12, dtype=np.float32), model_id="nzero"),
            g,
            CascadeConfig(max_steps=3),
        )
        zero_ok = zero_res.zero_cascade and zero_res.s_max == 0

        def rec(n, s_max, n_steps, ceiling=False):
            return TransportRecord(
                family="f",
                model_id=f"n{n}",
                variant="real",
                step=1,
                n_elements=n,
                tau=1.0,
                s_max=s_max,
                n_steps=n_steps,
                ceiling_limited=ceiling,
                zero_cascade=s_max == 0,
                v_abs=None if n_steps == 0 else s_max / n_steps,
                v_rel=None if n_steps == 0 else s_max / (n * n_steps),
            )

        ceiling_rec = rec(100, 900, 3, ceiling=True)
        zero_rec = rec(1000, 0, 0)
        clean = [rec(10, 20, 2), rec(10_000, 20_000, 4), rec(100_000, 180_000, 5)]

        fit = fit_step(clean + [ceiling_rec, zero_rec])
        fit_excludes = (
            not isinstance(fit, StepSkip)
            and fit.n_scales == 3
            and 100 not in fit.scales_used
            and 1000 not in fit.scales_used
        )
        skip = fit_step(clean + [ceiling_rec], require_all_scales=True)
        grid_skips = isinstance(skip, StepSkip)

        summary = window_summary([], clean + [ceiling_rec, zero_rec], (1, 2))
        summary_excludes = (
            summary.n_records == 3
            and "n100" not in summary.vrel_model_means
            and "n1000" not in summary.vrel_model_means
        )

        ok = ceiling_ok and zero_ok and fit_excludes and grid_skips and summary_excludes
        report(
            "A10",
            ok,
            f"ceiling(max_steps=3): limited={ceiling_res.ceiling_limited} "
            f"n_steps={ceiling_res.n_steps}; zero-field flagged={zero_ok}; "
            f"excluded from fits={fit_excludes}, common-grid skip={grid_skips}, "
            f"excluded from summaries={summary_excludes}",
        )


class TestA11PipelineDeterminism:
    def test_a11(self, a11_runs):
        run1, run2, resumed = a11_runs

        def comparable(root: Path) -> dict[str, bytes]:
            tree = tree_bytes(root)
            return {
                name: blob
                for name, blob in tree.items()
                if name.startswith(("out/", "snaps/"))
            }

        t1, t2, t3 = (comparable(r) for r in a11_runs)
        fresh_ok = t1 == t2
        resume_ok = t1 == t3
        audit_ok = (
            main(["audit", "--config", str(run1 / "run.ini")]) == 0
        )
        ok = fresh_ok and resume_ok and audit_ok
        report(
            "A11",
            ok,
            f"{len(t1)} files; run1==run2 byte-identical: {fresh_ok}; "
            f"resumed==fresh: {resume_ok}; audit reproduces outputs: {audit_ok}",
        )
