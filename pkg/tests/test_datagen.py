from __future__ import annotations

import numpy as np
import pytest

from tea_lab.datagen import (
    DataSpecError, GeneratorSpec, gen_adversarial_blocks, gen_latent_factor_sequences, gen_static_multilabel,
    generate_raw, read_dataset, window_and_split, write_dataset,
)


def ols_fit(x, y):
    X = np.c_[x, np.ones(len(x))]
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return lambda q: np.c_[q, np.ones(len(q))] @ coef


def test_one_window_per_sequence_and_table_dims():
    spec = GeneratorSpec(entities=20, static_dim=11, feature_dim=43, target_dim=34)
    data = gen_latent_factor_sequences(spec)
    assert len(data) == 20
    assert (data.x_dim, data.y_dim) == (140, 136)
    assert data.x_flat.shape == (20, 140) and data.y_flat.shape == (20, 136)


def test_sliding_windows_line_up_with_raw_sequences():
    raw = generate_raw(GeneratorSpec(entities=5, timesteps=9))
    data = window_and_split(raw, 2, 3)
    assert len(data) == 5 * (9 - 2 - 3 + 1)
    for i in range(len(data)):
        e, t = data.entity[i], data.start[i]
        np.testing.assert_array_equal(data.x[i], raw.features[e, t:t + 2])
        np.testing.assert_array_equal(data.y[i], raw.targets[e, t + 2:t + 5])
        np.testing.assert_array_equal(data.static[i], raw.static[e])
    with pytest.raises(DataSpecError):
        window_and_split(raw, 5, 5)


def test_entity_split_is_disjoint():
    raw = generate_raw(GeneratorSpec(entities=50, timesteps=9))
    data = window_and_split(raw, 2, 3, (0.6, 0.2, 0.2), seed=4)
    owners = {}
    for e, s in zip(data.entity, data.split):
        assert owners.setdefault(e, s) == s
    counts = {s: sum(1 for v in owners.values() if v == s) for s in ("train", "validation", "test")}
    assert counts == {"train": 30, "validation": 10, "test": 10}
    with pytest.raises(DataSpecError):
        window_and_split(raw, 2, 3, (0.5, 0.2, 0.2))


def test_generators_are_pure_in_spec():
    for spec in (GeneratorSpec(entities=30), GeneratorSpec.adversarial(entities=30), GeneratorSpec.multilabel(entities=30)):
        a, b = generate_raw(spec), generate_raw(spec)
        np.testing.assert_array_equal(a.targets, b.targets)
        np.testing.assert_array_equal(a.static, b.static)
    assert not np.array_equal(generate_raw(GeneratorSpec(entities=30, seed=1)).targets,
                              generate_raw(GeneratorSpec(entities=30, seed=2)).targets)


def test_spec_validation():
    with pytest.raises(DataSpecError):
        generate_raw(GeneratorSpec(spectral_radius=1.0))
    with pytest.raises(DataSpecError):
        GeneratorSpec(latent_dim=200, target_dim=40, w_y=4)
    with pytest.raises(DataSpecError):
        GeneratorSpec(kind="nonsense")
    with pytest.raises(DataSpecError):
        GeneratorSpec(noise=-0.1)


def test_noiseless_targets_have_latent_rank():
    data = gen_latent_factor_sequences(GeneratorSpec(entities=300, noise=0.0, innovation=0.0))
    assert np.linalg.matrix_rank(data.y_flat, tol=1e-8) == 8
    # fresh innovations at each of the w_y target steps add latent directions
    data = gen_latent_factor_sequences(GeneratorSpec(entities=300, noise=0.0))
    assert np.linalg.matrix_rank(data.y_flat, tol=1e-8) == 4 * 8


def test_least_squares_reaches_noise_floor():
    # exact features and deterministic dynamics: the only irreducible error is target noise
    spec = GeneratorSpec(entities=10_000, noise=0.1, feature_noise=0.0, innovation=0.0, split=(0.8, 0.0, 0.2))
    data = gen_latent_factor_sequences(spec)
    tr, te = data.part("train"), data.part("test")
    mse = np.mean((ols_fit(tr.x_flat, tr.y_flat)(te.x_flat) - te.y_flat) ** 2)
    assert abs(mse - spec.noise ** 2) < 0.1 * spec.noise ** 2


def test_adversarial_shapes_and_blocks():
    data = gen_adversarial_blocks()
    assert (data.x_dim, data.y_dim) == (10, 50)
    assert data.blocks == {"P": list(range(10)), "U": list(range(10, 50))}


def test_adversarial_least_squares_oracle():
    data = gen_adversarial_blocks(GeneratorSpec.adversarial(entities=10_000))
    tr, te = data.part("train"), data.part("test")
    err = (ols_fit(tr.x_flat, tr.y_flat)(te.x_flat) - te.y_flat) ** 2
    assert err[:, :10].mean() < 1e-20
    var_u = te.y_flat[:, 10:].var(axis=0).mean()
    assert abs(err[:, 10:].mean() - var_u) < 0.02 * var_u


def test_adversarial_features_independent_of_unpredictable_block():
    norms = []
    for n in (1_000, 16_000):
        d = gen_adversarial_blocks(GeneratorSpec.adversarial(entities=n, seed=5))
        x, yu = d.x_flat, d.y_flat[:, 10:]
        c = np.corrcoef(x.T, yu.T)[:10, 10:]
        assert np.abs(c).max() < 5 / np.sqrt(n)
        norms.append(np.linalg.norm(c))
    # covariance norm shrinks like 1/sqrt(N): 16x the data, about 4x smaller
    assert norms[1] < norms[0] / 2


def test_multilabel_marginals_and_rank():
    data = gen_static_multilabel()
    raw = generate_raw(GeneratorSpec.multilabel())
    marg = np.asarray(raw.metadata["label_marginals"])
    assert marg.min() >= 0.05 and marg.max() <= 0.95
    assert raw.metadata["logit_rank"] == 6
    assert set(np.unique(data.y_flat)) == {0.0, 1.0}
    assert data.binary_columns == tuple(range(60))


def test_multilabel_from_json_uses_kind_defaults():
    spec = GeneratorSpec.from_json({"kind": "static-multilabel", "entities": 50})
    assert spec == GeneratorSpec.multilabel(entities=50)
    assert GeneratorSpec.from_json(spec.to_json()) == spec


@pytest.mark.parametrize("spec", [
    GeneratorSpec(entities=12, binary_fraction=0.25),
    GeneratorSpec.adversarial(entities=12),
    GeneratorSpec.multilabel(entities=12),
])
def test_csv_round_trip(tmp_path, spec):
    raw = generate_raw(spec)
    path, sidecar = write_dataset(raw, tmp_path / "d.csv", windows=(spec.w_x, spec.w_y))
    back, meta = read_dataset(path)
    assert len(path.read_text().splitlines()) == 1 + spec.entities * spec.timesteps
    for name in ("static", "features", "targets"):
        np.testing.assert_array_equal(getattr(back, name), getattr(raw, name))
    assert back.variable_types == raw.variable_types
    assert meta["generator"] == spec.kind and meta["seed"] == spec.seed
    assert {"generator", "seed", "dims", "variable_types", "split_fractions"} <= set(meta)
    again, _ = write_dataset(raw, tmp_path / "e.csv", windows=(spec.w_x, spec.w_y))
    assert again.read_bytes() == path.read_bytes()
