import itertools

import numpy as np
import pytest

from steertext import clustering as cl

from conftest import make_table, random_table


class TestNnscEncode:
    def test_exact_representation(self):
        centers = np.eye(3)
        x = centers[0].copy()
        sc = cl.nnsc_encode(x, centers, cl.NnscSettings(lam=0.0))
        np.testing.assert_allclose(sc.weights, [1, 0, 0], atol=1e-3)
        assert sc.objective < 1e-5

    def test_large_lambda_zero_code(self):
        """lam >= 2*max(c.x) makes a = 0 a first-order optimum at the origin."""
        rng = np.random.default_rng(0)
        centers = rng.normal(size=(4, 3))
        x = rng.normal(size=3)
        x /= np.linalg.norm(x)
        lam = 2.0 * max(float(c @ x) for c in centers) + 0.1
        sc = cl.nnsc_encode(x, centers, cl.NnscSettings(lam=lam))
        np.testing.assert_allclose(sc.weights, 0.0, atol=1e-6)
        assert sc.objective == pytest.approx(float(x @ x), abs=1e-6)

    def test_zero_iterations_returns_zero_code(self):
        sc = cl.nnsc_encode(np.ones(2), np.eye(2), cl.NnscSettings(iters=0))
        np.testing.assert_array_equal(sc.weights, [0, 0])

    def test_weights_stay_in_box(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            centers = rng.normal(size=(5, 4)) * 3
            x = rng.normal(size=4)
            sc = cl.nnsc_encode(x, centers,
                                cl.NnscSettings(iters=300, lam=0.05))
            assert np.all(sc.weights >= 0) and np.all(sc.weights <= 1)

    def test_objective_not_worse_than_zero_code(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            centers = rng.normal(size=(4, 3))
            x = rng.normal(size=3)
            sc = cl.nnsc_encode(x, centers, cl.NnscSettings(iters=500))
            assert sc.objective <= float(x @ x) + 1e-9

    def test_grid_search_oracle_small(self):
        """Spot check against a 201^3 grid; the acceptance suite runs 100."""
        rng = np.random.default_rng(42)
        vals = np.linspace(0, 1, 201)
        grid = np.array(list(itertools.product(vals, repeat=3)))
        for _ in range(10):
            centers = rng.normal(size=(3, 2))
            x = rng.normal(size=2)
            x /= np.linalg.norm(x)
            sc = cl.nnsc_encode(x, centers)
            resid = grid @ centers - x
            best = float(((resid**2).sum(1) + 0.1 * grid.sum(1)).min())
            assert abs(sc.objective - best) < 1e-3

    def test_smaller_lambda_never_worse_reconstruction(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            centers = rng.normal(size=(3, 2))
            x = rng.normal(size=2)
            x /= np.linalg.norm(x)
            recon = []
            for lam in (0.3, 0.05):
                sc = cl.nnsc_encode(x, centers, cl.NnscSettings(lam=lam))
                r = sc.weights @ centers - x
                recon.append(float(r @ r))
            assert recon[1] <= recon[0] + 1e-6

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValueError):
            cl.nnsc_encode(np.ones(2), np.eye(2), cl.NnscSettings(lam=-0.1))


class TestKmeans:
    def test_two_separated_pairs(self):
        pts = np.array([[0.0, 0], [0, 0.2], [10, 10], [10, 10.2]])
        res = cl.kmeans(pts, 2, rng=np.random.default_rng(0))
        got = sorted(res.centers.tolist())
        np.testing.assert_allclose(got, [[0, 0.1], [10, 10.1]], atol=1e-9)

    def test_j_equals_n_zero_objective(self):
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(6, 3))
        res = cl.kmeans(pts, 6, rng=rng)
        assert res.inertia == pytest.approx(0.0, abs=1e-12)
        assert sorted(map(tuple, res.centers.round(9))) == \
            sorted(map(tuple, pts.round(9)))

    def test_objective_monotone_nonincreasing(self):
        rng = np.random.default_rng(2)
        pts = rng.normal(size=(60, 4))
        res = cl.kmeans(pts, 5, rng=rng)
        hist = res.inertia_history
        assert all(a >= b - 1e-9 for a, b in zip(hist, hist[1:]))
        assert len(hist) <= 301

    def test_beats_random_assignments(self):
        """8 points, J=2: objective <= best of 1,000 random assignments."""
        rng = np.random.default_rng(3)
        pts = rng.normal(size=(8, 2))
        res = cl.kmeans(pts, 2, rng=rng)
        best = np.inf
        for _ in range(1000):
            labels = rng.integers(0, 2, size=8)
            if len(set(labels.tolist())) < 2:
                continue
            total = 0.0
            for c in range(2):
                grp = pts[labels == c]
                total += ((grp - grp.mean(axis=0)) ** 2).sum()
            best = min(best, total)
        assert res.inertia <= best + 1e-9

    def test_too_few_points_rejected(self):
        with pytest.raises(ValueError):
            cl.kmeans(np.zeros((2, 2)), 3)


class TestGlobalIndex:
    def test_kmeans_index_audit(self):
        table = random_table(300, 16, seed=10)
        index = cl.build_global_index(table, 20, 4,
                                      rng=np.random.default_rng(0))
        assert len(index) + len(index.dropped) == 20
        norms = np.linalg.norm(index.topic_embeddings, axis=1)
        assert np.all(np.abs(norms - 1) < 1e-6)
        for tw in index.top_words:
            cosines = [c for _, c in tw]
            assert cosines == sorted(cosines, reverse=True)

    def test_sample_index_centers_are_vocab_rows(self):
        table = random_table(50, 8, seed=11)
        index = cl.build_global_index(table, 10, 3, method="sample",
                                      rng=np.random.default_rng(1))
        rows = {tuple(r.round(12)) for r in table.matrix}
        for c in index.centers:
            assert tuple(c.round(12)) in rows

    def test_vocab_smaller_than_j_rejected(self):
        table = random_table(5, 4, seed=0)
        with pytest.raises(ValueError):
            cl.build_global_index(table, 10, 2)


class TestSelectGlobalTopics:
    def _index(self, n=30, d=8, seed=12):
        table = random_table(n * 4, d, seed=seed)
        return cl.build_global_index(table, n, 3,
                                     rng=np.random.default_rng(0)), table

    def test_exact_topic_embedding_ranks_first(self):
        index, table = self._index()
        from steertext.embedspace import PromptEmbedding

        pe = PromptEmbedding(index.topic_embeddings[7].copy(), 3, 0)
        out = cl.select_global_topics(index, pe, 5)
        assert out[0].source_id == 7

    def test_matches_exhaustive_sort(self):
        index, table = self._index()
        from steertext.embedspace import PromptEmbedding

        rng = np.random.default_rng(5)
        for _ in range(20):
            v = rng.normal(size=table.dim)
            pe = PromptEmbedding(v, 2, 0)
            got = [o.source_id for o in cl.select_global_topics(index, pe, 10)]
            cos = index.topic_embeddings @ (v / np.linalg.norm(v))
            expect = sorted(range(len(index)), key=lambda j: (-cos[j], j))[:10]
            assert got == expect

    def test_k_equals_j_returns_all(self):
        index, _ = self._index(n=12)
        from steertext.embedspace import PromptEmbedding

        pe = PromptEmbedding(np.ones(8), 1, 0)
        out = cl.select_global_topics(index, pe, len(index))
        assert sorted(o.source_id for o in out) == list(range(len(index)))

    def test_zero_prompt_rejected(self):
        index, _ = self._index(n=12)
        from steertext.embedspace import PromptEmbedding

        with pytest.raises(ValueError, match="zero"):
            cl.select_global_topics(index, PromptEmbedding(np.zeros(8), 0, 0), 3)

    def test_permutation_stable_tiebreak(self):
        """Duplicated topic embeddings rank by ascending cluster id."""
        table = random_table(40, 6, seed=13)
        index = cl.build_global_index(table, 8, 3,
                                      rng=np.random.default_rng(2))
        index.topic_embeddings[5] = index.topic_embeddings[1]
        from steertext.embedspace import PromptEmbedding

        pe = PromptEmbedding(index.topic_embeddings[1].copy(), 1, 0)
        got = [o.source_id for o in cl.select_global_topics(index, pe, 3)]
        assert got[0] == 1 and got[1] == 5


class TestLocalOptions:
    WORDS = [f"w{i}" for i in range(40)]

    def test_sample_returns_prompt_words(self):
        table = random_table(40, 8, seed=14)
        prompt = [f"w{i}" for i in range(10)]
        opts = cl.local_options(prompt, table, 10, 3, "sample",
                                np.random.default_rng(0))
        rows = {tuple(table.row(w).round(12)) for w in prompt}
        for o in opts:
            assert tuple(o.center.round(12)) in rows

    def test_kmeans_two_cluster_prompt(self):
        base = np.zeros((2, 8))
        base[0, 0] = 1
        base[1, 1] = 1
        rng = np.random.default_rng(15)
        vecs = []
        for i in range(12):
            v = base[i % 2] + rng.normal(0, 0.01, 8)
            vecs.append(v)
        table = make_table(np.array(vecs))
        opts = cl.local_options([f"w{i}" for i in range(12)], table, 2, 2,
                                "kmeans", np.random.default_rng(0))
        units = sorted(np.argmax(np.abs(o.center)) for o in opts)
        assert units == [0, 1]

    def test_short_prompt_raises_with_shortfall(self):
        table = random_table(20, 6, seed=16)
        with pytest.raises(cl.ShortPromptError) as exc:
            cl.local_options(["w0", "w1", "w0"], table, 5, 2, "kmeans",
                             np.random.default_rng(0))
        assert exc.value.needed == 5
        assert exc.value.available == 2

    def test_oov_words_do_not_count(self):
        table = random_table(20, 6, seed=16)
        with pytest.raises(cl.ShortPromptError):
            cl.local_options(["w0", "nope1", "nope2", "nope3", "nope4"],
                             table, 3, 2, "kmeans", np.random.default_rng(0))

    def test_nnsc_beats_random_atoms(self):
        """Dictionary fit reconstructs prompt words better than random atoms."""
        rng = np.random.default_rng(17)
        table = random_table(200, 12, seed=18)
        settings = cl.NnscSettings(iters=150)
        wins = 0
        trials = 25
        for t in range(trials):
            words = [f"w{i}" for i in
                     rng.choice(200, size=25, replace=False)]
            vecs = np.vstack([table.row(w) for w in words])
            opts = cl.local_options(words, table, 6, 3, "nnsc",
                                    np.random.default_rng(t))
            atoms = np.vstack([o.center for o in opts])
            fitted = cl.reconstruction_objective(vecs, atoms, settings)
            rand = table.matrix[rng.choice(200, size=6, replace=False)]
            random_obj = cl.reconstruction_objective(vecs, rand, settings)
            wins += fitted <= random_obj
        assert wins >= trials * 0.9

    def test_every_option_satisfies_invariants(self):
        table = random_table(60, 8, seed=19)
        prompt = [f"w{i}" for i in range(30)]
        for method in ("kmeans", "nnsc", "sample"):
            opts = cl.local_options(prompt, table, 5, 4, method,
                                    np.random.default_rng(3))
            assert len(opts) == 5
            for o in opts:
                assert len(o.top_words) == 4
                cos = [c for _, c in o.top_words]
                assert cos == sorted(cos, reverse=True)
                assert abs(np.linalg.norm(o.topic_embedding) - 1) < 1e-6
