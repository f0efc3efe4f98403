"""Noise injection: rate concentration, subset/range invariants, determinism."""

import numpy as np
import pytest

from tabclean.data import synth_generate
from tabclean.noiselab import (
    PROTOCOL_RATES,
    NoiseMask,
    NoisePlan,
    effective_rate,
    inject_noise,
)


def test_protocol_rates_frozen():
    assert PROTOCOL_RATES == (0.0, 0.05, 0.10, 0.15, 0.20, 0.40, 0.60)


def test_plan_validation():
    with pytest.raises(ValueError):
        NoisePlan(rate=1.0)
    with pytest.raises(ValueError):
        NoisePlan(rate=-0.1)
    with pytest.raises(ValueError):
        NoisePlan(rate=0.2, target="all-cells")


def test_zero_rate_identity():
    ds, _ = synth_generate(40, 4, 2, missing_rate=0.2, seed=0)
    corrupted, mask = inject_noise(ds, NoisePlan(rate=0.0, seed=1))
    assert mask.count() == 0
    assert (corrupted.cells == ds.cells).all()
    assert corrupted.labels.tolist() == ds.labels.tolist()
    assert corrupted.specs == ds.specs


def test_rate_concentration_on_large_grid():
    # ~10^4 observed cells at rate 0.2: corrupted count within +-2% absolute
    ds, _ = synth_generate(1000, 10, 0, missing_rate=0.0, seed=2)
    assert ds.observed.sum() == 10_000
    corrupted, mask = inject_noise(ds, NoisePlan(rate=0.2, seed=3))
    assert abs(mask.count() - 2000) <= 200


def test_corrupted_subset_of_observed():
    ds, _ = synth_generate(200, 5, 3, missing_rate=0.3, seed=4)
    _, mask = inject_noise(ds, NoisePlan(rate=0.4, seed=5))
    assert not (mask.flags.astype(bool) & ~ds.observed).any()
    # missingness pattern unchanged
    corrupted, _ = inject_noise(ds, NoisePlan(rate=0.4, seed=5))
    assert (corrupted.observed == ds.observed).all()


def test_determinism_under_seed():
    ds, _ = synth_generate(100, 4, 2, missing_rate=0.1, seed=6)
    a_ds, a_mask = inject_noise(ds, NoisePlan(rate=0.3, seed=7))
    b_ds, b_mask = inject_noise(ds, NoisePlan(rate=0.3, seed=7))
    c_ds, c_mask = inject_noise(ds, NoisePlan(rate=0.3, seed=8))
    assert (a_ds.cells == b_ds.cells).all()
    assert (a_mask.flags == b_mask.flags).all()
    assert (a_mask.flags != c_mask.flags).any()


def test_ranges_and_categories_preserved():
    ds, _ = synth_generate(300, 4, 3, missing_rate=0.1, seed=9)
    corrupted, mask = inject_noise(ds, NoisePlan(rate=0.6, seed=10))
    for j, spec in enumerate(ds.specs):
        obs = corrupted.observed[:, j]
        if spec.kind == "continuous":
            vals = [corrupted.cells[i, j] for i in np.flatnonzero(obs)]
            assert min(vals) >= spec.observed_min - 1e-12
            assert max(vals) <= spec.observed_max + 1e-12
        else:
            for i in np.flatnonzero(obs):
                assert corrupted.cells[i, j] in spec.categories


def test_noise_changes_only_flagged_cells():
    ds, _ = synth_generate(150, 5, 2, missing_rate=0.0, seed=11)
    corrupted, mask = inject_noise(ds, NoisePlan(rate=0.25, seed=12))
    flags = mask.flags.astype(bool)
    changed = np.zeros_like(flags)
    for i in range(ds.n_rows):
        for j in range(ds.n_features):
            changed[i, j] = corrupted.cells[i, j] != ds.cells[i, j]
    # every change is flagged (flagged cells may keep their value by chance)
    assert not (changed & ~flags).any()
    # at this rate most flagged continuous cells actually changed
    assert changed.sum() > 0.5 * flags.sum()


def test_per_column_rates_within_three_sigma():
    ds, _ = synth_generate(2000, 6, 0, missing_rate=0.0, seed=13)
    rate = 0.3
    _, mask = inject_noise(ds, NoisePlan(rate=rate, seed=14))
    sigma = np.sqrt(rate * (1 - rate) / 2000)
    col_rates = mask.flags.mean(axis=0)
    assert (np.abs(col_rates - rate) <= 3 * sigma + 1e-12).all()


def test_effective_rate_helper():
    assert effective_rate(0.4, None) == 0.4
    assert effective_rate(0.4, 4) == pytest.approx(0.3)
    assert effective_rate(0.0, 2) == 0.0


def test_noise_mask_csv_round_trip(tmp_path):
    flags = np.array([[1, 0], [0, 1]], dtype=np.int8)
    path = tmp_path / "mask.csv"
    NoiseMask(flags=flags).to_csv(str(path), feature_names=["a", "b"])
    text = path.read_text().strip().splitlines()
    assert text[0] == "a,b"
    assert text[1] == "1,0"
    assert text[2] == "0,1"
