import numpy as np
import pytest

from emergelab import evolution


def brute_force_ess(matrix: np.ndarray, tol: float = evolution.EQ_TOL) -> list[bool]:
    """Direct transcription of the pure-ESS definition, used as oracle."""
    n = matrix.shape[0]
    out = []
    for i in range(n):
        ok = True
        for j in range(n):
            if j == i:
                continue
            a, b = matrix[i, i], matrix[j, i]
            if a > b + tol:
                continue
            if abs(a - b) <= tol and matrix[i, j] > matrix[j, j] + tol:
                continue
            ok = False
            break
        out.append(ok)
    return out


def _table_from_matrix(matrix, noise=0.0, runs=4, seed=0):
    rng = np.random.default_rng(seed)
    types = [f"t{i}" for i in range(matrix.shape[0])]
    table = evolution.PayoffTable(types=types)
    for i, s in enumerate(types):
        for j, r in enumerate(types):
            for _ in range(runs):
                table.add(s, r, matrix[i, j] + noise * rng.normal())
    return table


class TestSymmetrize:
    def test_averages_both_roles(self):
        m = np.array([[0.9, 0.4], [0.8, 0.7]])
        table = _table_from_matrix(m)
        sym = evolution.symmetrize(table)
        np.testing.assert_allclose(sym.matrix, [[0.9, 0.6], [0.6, 0.7]], atol=1e-12)

    def test_idempotent_on_symmetric_input(self):
        m = np.array([[0.5, 0.2, 0.1], [0.2, 0.6, 0.3], [0.1, 0.3, 0.4]])
        sym = evolution.symmetrize(_table_from_matrix(m))
        np.testing.assert_allclose(sym.matrix, m, atol=1e-12)
        np.testing.assert_allclose(sym.matrix, sym.matrix.T, atol=1e-12)


class TestFindPureESS:
    def test_hawk_dove_has_no_pure_ess(self):
        # Classic Hawk-Dove: mixed ESS only.
        v, c = 2.0, 4.0
        m = np.array([[(v - c) / 2, v], [0.0, v / 2]])
        report = evolution.find_pure_ess(evolution.SymmetricPayoff(["hawk", "dove"], m))
        assert report.is_ess == {"hawk": False, "dove": False}

    def test_prisoners_dilemma_defect_is_ess(self):
        m = np.array([[3.0, 0.0], [5.0, 1.0]])  # rows: C, D
        report = evolution.find_pure_ess(evolution.SymmetricPayoff(["C", "D"], m))
        assert report.is_ess == {"C": False, "D": True}
        assert report.condition["D"] == "strict"

    def test_tie_breaker_condition(self):
        # Diagonal ties against the invader, but the resident does better
        # against the invader than the invader against itself.
        m = np.array([[1.0, 0.8], [1.0, 0.5]])
        report = evolution.find_pure_ess(evolution.SymmetricPayoff(["a", "b"], m))
        assert report.is_ess["a"] is True
        assert report.condition["a"] == "tie_breaker"
        assert report.is_ess["b"] is False

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            evolution.find_pure_ess(
                evolution.SymmetricPayoff(["a"], np.zeros((1, 2)))
            )

    @pytest.mark.parametrize("trial", range(10))
    def test_matches_bruteforce_oracle(self, trial):
        """1000 random symmetric matrices, sizes 2-6, exact agreement."""
        rng = np.random.default_rng(trial)
        for _ in range(100):
            n = int(rng.integers(2, 7))
            m = rng.random((n, n))
            m = (m + m.T) / 2
            if rng.random() < 0.3:
                # Force some exact ties to exercise the tie-breaker branch.
                i, j = rng.integers(n, size=2)
                m[i, i] = m[j, i]
                m[i, j] = m[j, i]
            types = [f"t{k}" for k in range(n)]
            report = evolution.find_pure_ess(evolution.SymmetricPayoff(types, m))
            expected = brute_force_ess(m)
            assert [report.is_ess[t] for t in types] == expected


class TestSignificance:
    def test_clear_gap_is_significant(self):
        m = np.array([[0.95, 0.7], [0.7, 0.6]])
        table = _table_from_matrix(m, noise=0.01, runs=8, seed=1)
        report = evolution.find_pure_ess(evolution.symmetrize(table))
        report = evolution.annotate_significance(report, table, resamples=2000)
        assert report.is_ess["t0"] is True
        assert report.significant["t0"] is True
        assert report.significant["t1"] is None

    def test_noisy_overlap_not_significant(self):
        m = np.array([[0.62, 0.6], [0.6, 0.55]])
        table = _table_from_matrix(m, noise=0.25, runs=4, seed=2)
        sym = evolution.symmetrize(table)
        report = evolution.find_pure_ess(sym)
        report = evolution.annotate_significance(report, table, resamples=2000)
        for t, flag in report.is_ess.items():
            if flag:
                assert report.significant[t] in (True, False)

    def test_report_json_stable(self):
        m = np.array([[1.0, 0.0], [0.0, 0.5]])
        report = evolution.find_pure_ess(evolution.SymmetricPayoff(["a", "b"], m))
        a = report.to_json()
        b = report.to_json()
        assert a == b
        assert '"is_ess"' in a


class TestPayoffTableIO:
    def test_csv_roundtrip(self, tmp_path):
        m = np.array([[0.9, 0.4], [0.8, 0.7]])
        table = _table_from_matrix(m, noise=0.05, runs=3, seed=5)
        path = tmp_path / "payoff.csv"
        table.save_csv(path)
        loaded = evolution.PayoffTable.load_csv(path)
        assert loaded.types == table.types
        for key, samples in table.samples.items():
            np.testing.assert_allclose(loaded.samples[key], samples, rtol=1e-9)


class TestTournament:
    def test_serial_tournament_structure(self, tiny_dataset):
        """A minimal 2-type tournament fills every directed cell."""
        from emergelab import agents, smoothing, training

        pre_cfg = training.PretrainConfig(epochs=2)
        weights = {}
        for i, t in enumerate(["default", "scale"]):
            v = agents.VisionModule(seed=i)
            training.pretrain_vision(v, tiny_dataset, smoothing.default_spec(t),
                                     pre_cfg, np.random.default_rng(i))
            weights[t] = {p.name: p.data.copy() for p in v.parameters()}
        game_cfg = agents.GameConfig()
        train_cfg = training.GameTrainConfig(scenario="frozen_vision", epochs=1,
                                             batch_size=64)
        table = evolution.run_tournament(
            ["default", "scale"], weights, tiny_dataset, game_cfg, train_cfg,
            runs_per_pair=2, seed=0, workers=1,
        )
        assert set(table.samples) == {
            (s, r) for s in ("default", "scale") for r in ("default", "scale")
        }
        for samples in table.samples.values():
            assert len(samples) == 2
            assert all(0.0 <= x <= 1.0 for x in samples)

    def test_cell_seeds_deterministic(self, tiny_dataset):
        from emergelab import agents, training

        v = agents.VisionModule(seed=0)
        weights = {"default": {p.name: p.data.copy() for p in v.parameters()}}
        game_cfg = agents.GameConfig()
        train_cfg = training.GameTrainConfig(scenario="frozen_vision", epochs=1,
                                             batch_size=64)
        kwargs = dict(runs_per_pair=1, seed=3, workers=1)
        a = evolution.run_tournament(["default"], weights, tiny_dataset,
                                     game_cfg, train_cfg, **kwargs)
        b = evolution.run_tournament(["default"], weights, tiny_dataset,
                                     game_cfg, train_cfg, **kwargs)
        assert a.samples == b.samples
