import itertools
import json
import math

import numpy as np
import pytest

from gapscope.evolution import TimeGrid, trotter_circuit
from gapscope.hamiltonian import Hamiltonian, PauliString, build_model
from gapscope.shadows import (
    NoiseModel,
    SnapshotRecord,
    SnapshotSet,
    collect_snapshot,
    estimate_observable,
    fixed_budget_variance_bound,
    run_experiment,
    snapshot_estimate,
    task_rng,
    variance_bound,
)
from gapscope.statevector import StateVector, apply_circuit, expectation, product_state

TOY = Hamiltonian.from_terms(2, [(1.0, "XX"), (1.0, "ZI")])
Z0 = PauliString.from_label("ZI")


def test_snapshot_estimate_examples():
    z = PauliString.from_label("ZII")
    assert snapshot_estimate(SnapshotRecord(1, 1.0, "ZXY", "010"), z) == 3
    assert snapshot_estimate(SnapshotRecord(1, 1.0, "ZXY", "110"), z) == -3
    assert snapshot_estimate(SnapshotRecord(1, 1.0, "XXY", "010"), z) == 0
    zz = PauliString.from_label("ZIY")
    assert snapshot_estimate(SnapshotRecord(1, 1.0, "ZXY", "001"), zz) == -9
    assert snapshot_estimate(SnapshotRecord(1, 1.0, "ZXY", "000"), PauliString.identity(3)) == 1


def test_snapshot_estimate_width_mismatch():
    with pytest.raises(ValueError):
        snapshot_estimate(SnapshotRecord(1, 1.0, "ZZ", "00"), PauliString.from_label("ZII"))


def test_record_validation():
    with pytest.raises(ValueError):
        SnapshotRecord(1, 1.0, "ZZ", "0")
    with pytest.raises(ValueError):
        SnapshotRecord(1, 0.0, "Z", "0")


def small_set(records):
    return SnapshotSet.from_records(records)


def test_estimate_observable_trivial_cases():
    rec = SnapshotRecord(1, -2.5, "XZ", "10")
    assert estimate_observable(small_set([rec]), PauliString.from_label("XI")) == pytest.approx(
        -2.5 * snapshot_estimate(rec, PauliString.from_label("XI"))
    )
    recs = [SnapshotRecord(1, g, "ZZ", "00") for g in (1.5, -1.5, 1.5)]
    assert estimate_observable(small_set(recs), PauliString.identity(2)) == pytest.approx(0.5)


def test_estimate_matches_record_loop():
    rng = np.random.default_rng(0)
    recs = [
        SnapshotRecord(
            1,
            float(rng.choice([-1.3, 1.3])),
            "".join(rng.choice(list("XYZ"), size=3)),
            "".join(rng.choice(list("01"), size=3)),
        )
        for _ in range(300)
    ]
    snaps = small_set(recs)
    for label in ["XII", "IYZ", "ZZZ", "III", "XYI"]:
        o = PauliString.from_label(label)
        loop = np.mean([r.gamma * snapshot_estimate(r, o) for r in recs])
        assert estimate_observable(snaps, o) == pytest.approx(loop, abs=1e-12)


def test_estimate_empty_raises():
    empty = SnapshotSet(1, [], [], np.zeros((0, 1)), np.zeros((0, 1)))
    with pytest.raises(ValueError):
        estimate_observable(empty, PauliString.from_label("Z"))


def test_shadow_is_unbiased_for_bloch_vector():
    rng = np.random.default_rng(5)
    v = rng.normal(size=4) + 1j * rng.normal(size=4)
    state = StateVector(2, v / np.linalg.norm(v))
    recs = []
    for _ in range(30000):
        b, o = collect_snapshot(state, rng)
        recs.append(SnapshotRecord(1, 1.0, b, o))
    snaps = small_set(recs)
    for label in ["XI", "IY", "ZZ", "XY"]:
        o = PauliString.from_label(label)
        vals = np.array([snapshot_estimate(r, o) for r in recs])
        se = vals.std() / math.sqrt(len(vals))
        assert abs(estimate_observable(snaps, o) - expectation(state, o)) < 5 * se


def test_collect_snapshot_fixed_bases():
    b, o = collect_snapshot(product_state("0-"), np.random.default_rng(0), bases="ZX")
    assert (b, o) == ("ZX", "01")


def test_variance_bound_examples():
    assert variance_bound(1.0, 1, 1, 1) == 3
    assert variance_bound(2.0, 2, 10, 4) == pytest.approx(2 * (8 / 40 + 0.1))
    assert fixed_budget_variance_bound(2.0, 2, 40, 4) == pytest.approx(variance_bound(2.0, 2, 10, 4))
    values = [variance_bound(1.7, 3, m, 2) for m in (1, 5, 25)]
    assert values[0] > values[1] > values[2]
    with pytest.raises(ValueError):
        variance_bound(1.0, 1, 0, 1)


def test_task_rng_counter_independence():
    a = task_rng(3, 1, 2, 0).random(4)
    b = task_rng(3, 1, 2, 0).random(4)
    c = task_rng(3, 1, 2, 1).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_run_experiment_structure():
    grid = TimeGrid(0.6, 3, 6)
    snaps = run_experiment(TOY, product_state("00"), grid, "tepai", math.pi / 4, m=1, n_s=3, seed=2, workers=1)
    assert len(snaps) == 9
    for s in (1, 2, 3):
        g = snaps.at_time(s).gamma
        assert len(g) == 3 and len(set(g)) == 1
    assert snaps.metadata["n_t"] == 3 and snaps.metadata["method"] == "tepai"
    assert snaps.metadata["delta_over_pi"] == pytest.approx(0.25)
    assert snaps.circuit_stats["depth"].shape == (3, 1)


def test_trotter_mode_unit_weight():
    grid = TimeGrid(0.6, 2, 4)
    snaps = run_experiment(TOY, product_state("00"), grid, "trotter", m=5, n_s=2, seed=0, workers=1)
    assert np.all(snaps.gamma == 1.0)
    assert len(snaps) == 20


def test_run_experiment_validation():
    grid = TimeGrid(0.6, 2, 4)
    with pytest.raises(ValueError):
        run_experiment(TOY, product_state("00"), grid, "exact")
    with pytest.raises(ValueError):
        run_experiment(TOY, product_state("00"), grid, "tepai", None)
    with pytest.raises(ValueError):
        run_experiment(TOY, product_state("000"), grid, "trotter")
    with pytest.raises(ValueError):
        run_experiment(TOY, product_state("00"), TimeGrid(40.0, 2, 2), "tepai", 0.1)


def test_reproducible_across_worker_counts():
    h = build_model("heisenberg", 4)
    grid = TimeGrid(0.8, 4, 16)
    noise = NoiseModel(True, 0.01, 0.05)
    kw = dict(method="tepai", delta=math.pi / 8, m=6, n_s=2, noise=noise, seed=42)
    one = run_experiment(h, product_state("0101"), grid, workers=1, **kw)
    two = run_experiment(h, product_state("0101"), grid, workers=2, **kw)
    for col in ("s", "gamma", "bases", "bits"):
        assert np.array_equal(getattr(one, col), getattr(two, col))
    other = run_experiment(h, product_state("0101"), grid, workers=1, **{**kw, "seed": 43})
    assert not np.array_equal(one.bits, other.bits)


def test_jsonl_round_trip(tmp_path):
    grid = TimeGrid(0.6, 3, 6)
    snaps = run_experiment(TOY, product_state("0+"), grid, "tepai", math.pi / 4, m=4, n_s=2, seed=7, workers=1)
    path = tmp_path / "snaps.jsonl"
    snaps.write_jsonl(path)
    lines = path.read_text().splitlines()
    meta = json.loads(lines[0])
    assert set(meta) >= {"n_qubits", "n_t", "m", "n_s", "dt", "method", "delta_over_pi", "seed", "config_sha"}
    first = json.loads(lines[1])
    assert set(first) == {"s", "gamma", "bases", "bits"}
    back = SnapshotSet.read_jsonl(path)
    for col in ("s", "gamma", "bases", "bits"):
        assert np.array_equal(getattr(back, col), getattr(snaps, col))
    assert back.metadata == meta
    assert back.record(0) == snaps.record(0)


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(True, p1=1.2)
    assert not NoiseModel(False, 0.1, 0.1).active
    assert not NoiseModel(True, 0.0, 0.0).active


def exact_trotter_z0(t, k):
    psi = product_state("00")
    return expectation(apply_circuit(psi, trotter_circuit(TOY, t, k)), Z0)


@pytest.mark.parametrize("m,n_s", [(20000, 1), (10000, 2), (5000, 4)])
def test_unbiased_against_trotter_channel(m, n_s):
    grid = TimeGrid(0.7, 1, 4)
    snaps = run_experiment(TOY, product_state("00"), grid, "tepai", math.pi / 4, m=m, n_s=n_s, seed=11, workers=1)
    vals = snaps.gamma * np.array([3.0 if b == 0 else -3.0 for b in snaps.bits[:, 0]]) * (snaps.bases[:, 0] == 2)
    # Rows within one circuit are correlated: use per-circuit means for the error.
    per_circuit = vals.reshape(m, n_s).mean(axis=1)
    se = per_circuit.std() / math.sqrt(m)
    assert abs(estimate_observable(snaps, Z0) - exact_trotter_z0(0.7, 4)) < 5 * se


def test_trotter_mode_converges_to_trotterized_state():
    grid = TimeGrid(0.7, 1, 4)
    snaps = run_experiment(TOY, product_state("00"), grid, "trotter", m=40000, n_s=1, seed=1, workers=1)
    se = 3.0 / math.sqrt(len(snaps))
    assert abs(estimate_observable(snaps, Z0) - exact_trotter_z0(0.7, 4)) < 5 * se


PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.diag([1.0 + 0j, -1.0]),
}


def depolarize(rho, support, n, p):
    if p == 0:
        return rho
    out = (1 - p) * rho
    letters = [ls for ls in itertools.product("IXYZ", repeat=len(support)) if set(ls) != {"I"}]
    for ls in letters:
        ops = ["I"] * n
        for q, l in zip(support, ls):
            ops[q] = l
        mat = PAULI[ops[0]]
        for l in ops[1:]:
            mat = np.kron(mat, PAULI[l])
        out += p / len(letters) * mat @ rho @ mat.conj().T
    return out


def test_noisy_trajectories_match_depolarizing_channel():
    p1, p2 = 0.05, 0.2
    h = Hamiltonian.from_terms(2, [(1.0, "XX"), (0.7, "ZI"), (0.4, "IY")])
    t, k = 0.9, 3
    psi = product_state("00").amplitudes
    rho = np.outer(psi, psi.conj())
    for pauli, angle in trotter_circuit(h, t, k).gates:
        u = math.cos(angle / 2) * np.eye(4) - 1j * math.sin(angle / 2) * pauli.to_matrix()
        rho = u @ rho @ u.conj().T
        rho = depolarize(rho, pauli.support, 2, p1 if pauli.weight <= 1 else p2)
    obs = PauliString.from_label("ZX")
    target = np.trace(obs.to_matrix() @ rho).real
    noise = NoiseModel(True, p1, p2, include_measurement_layer=False)
    snaps = run_experiment(h, product_state("00"), TimeGrid(t, 1, k), "trotter", m=60000, n_s=1,
                           noise=noise, seed=3, workers=1)
    se = 9.0 / math.sqrt(len(snaps))
    assert abs(estimate_observable(snaps, obs) - target) < 5 * se
    assert abs(target - expectation(apply_circuit(product_state("00"), trotter_circuit(h, t, k)), obs)) > 0.05


def test_measurement_layer_noise_flips_only_rotated_bases():
    noise = NoiseModel(True, p1=0.3, p2=0.0, include_measurement_layer=True)
    snaps = run_experiment(Hamiltonian.from_terms(2, [(1e-9, "XX")]), product_state("00"), TimeGrid(1.0, 1, 1),
                           "trotter", m=20000, n_s=1, noise=noise, seed=0, workers=1)
    z_rows = snaps.bases[:, 0] == 2
    assert np.all(snaps.bits[z_rows, 0] == 0)
    # The gate itself is noiseless (p2 = 0), so X-basis ones on |++> are flips.
    snaps = run_experiment(Hamiltonian.from_terms(2, [(1e-9, "XX")]), product_state("++"), TimeGrid(1.0, 1, 1),
                           "trotter", m=20000, n_s=1, noise=noise, seed=0, workers=1)
    x_rows = snaps.bases[:, 0] == 0
    flip_rate = snaps.bits[x_rows, 0].mean()
    expected = 0.3 * 2 / 3
    n = x_rows.sum()
    assert abs(flip_rate - expected) < 5 * math.sqrt(expected * (1 - expected) / n)
