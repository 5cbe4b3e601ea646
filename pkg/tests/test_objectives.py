import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geossl import objectives as obj
from geossl import tensor as T
from geossl.encoder import EncoderParams, init_state


def randz(shape, seed=0, scale=1.0):
    return np.random.default_rng(seed).standard_normal(shape).astype(np.float32) * scale


def brute_force_similarity(z: np.ndarray) -> np.ndarray:
    """Pair-enumeration oracle: positive first, negatives in index order."""
    two_n = z.shape[0]
    n = two_n // 2
    zn = z / np.linalg.norm(z, axis=1, keepdims=True)
    out = np.zeros((two_n, two_n - 1))
    for i in range(two_n):
        pos = (i + n) % two_n
        row = [float(zn[i] @ zn[pos])]
        for j in range(two_n):
            if j != i and j != pos:
                row.append(float(zn[i] @ zn[j]))
        out[i] = row
    return out


class TestCosineSim:
    def test_orthogonal(self):
        assert obj.cosine_sim([1, 0], [0, 1]) == pytest.approx(0.0)

    def test_scale_invariant_colinear(self):
        assert obj.cosine_sim([2, 0], [5, 0]) == pytest.approx(1.0)

    def test_zero_vector_raises(self):
        with pytest.raises(obj.ObjectiveError):
            obj.cosine_sim([0, 0], [1, 1])

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_random_scale_invariance(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.standard_normal(5) + 0.1, rng.standard_normal(5) + 0.1
        assert obj.cosine_sim(3 * a, 7 * b) == pytest.approx(obj.cosine_sim(a, b), abs=1e-6)


class TestSimilarityMatrix:
    def test_unit_vector_example(self):
        e1, e2 = [1, 0], [0, 1]
        z = T.Tensor(np.array([e1, e2, e1, e2], dtype=np.float32))
        m = obj.build_similarity_matrix(z).data
        np.testing.assert_allclose(m, [[1, 0, 0]] * 4, atol=1e-6)

    def test_odd_rows_raise(self):
        with pytest.raises(obj.ObjectiveError):
            obj.build_similarity_matrix(T.Tensor(randz((3, 4))))

    @pytest.mark.parametrize("n", [2, 3, 8])
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_bruteforce_oracle(self, n, seed):
        z = randz((2 * n, 6), seed) + 0.05
        m = obj.build_similarity_matrix(T.Tensor(z)).data
        np.testing.assert_allclose(m, brute_force_similarity(z), atol=1e-5)

    def test_column_zero_is_positive(self):
        n = 4
        z = randz((2 * n, 5), 3) + 0.05
        zn = z / np.linalg.norm(z, axis=1, keepdims=True)
        m = obj.build_similarity_matrix(T.Tensor(z)).data
        for i in range(2 * n):
            assert m[i, 0] == pytest.approx(float(zn[i] @ zn[(i + n) % (2 * n)]), abs=1e-5)

    def test_row_multiset(self):
        n = 3
        z = randz((2 * n, 4), 9) + 0.05
        zn = z / np.linalg.norm(z, axis=1, keepdims=True)
        m = obj.build_similarity_matrix(T.Tensor(z)).data
        for i in range(2 * n):
            expect = sorted(float(zn[i] @ zn[j]) for j in range(2 * n) if j != i)
            np.testing.assert_allclose(sorted(m[i]), expect, atol=1e-5)


class TestNtXent:
    @pytest.mark.parametrize("n", [2, 8, 32])
    def test_collapse_value(self, n):
        z = T.Tensor(np.ones((2 * n, 8), dtype=np.float32))
        loss = obj.nt_xent(obj.build_similarity_matrix(z), 0.7)
        assert loss.item() == pytest.approx(np.log(2 * n - 1), abs=1e-5)

    def test_closed_form_positive_one_negatives_zero(self):
        m = T.Tensor(np.array([[1.0, 0.0, 0.0]] * 4, dtype=np.float32))
        expected = -np.log(np.e / (np.e + 2))
        assert obj.nt_xent(m, 1.0).item() == pytest.approx(expected, abs=1e-5)
        assert expected == pytest.approx(0.5514, abs=1e-4)

    def test_bad_tau(self):
        with pytest.raises(obj.ObjectiveError):
            obj.nt_xent(T.Tensor(randz((4, 3))), 0.0)

    @pytest.mark.parametrize("seed", range(10))
    def test_gradient(self, seed):
        z = T.Tensor(randz((8, 6), seed) + 0.05)
        err = T.finite_diff_check(
            lambda t: obj.nt_xent(obj.build_similarity_matrix(t), 0.2), z, 1e-3)
        assert err < 1e-3

    def test_scale_invariance(self):
        z = randz((8, 5), 2) + 0.05
        a = obj.nt_xent(obj.build_similarity_matrix(T.Tensor(z)), 0.3).item()
        z2 = z.copy()
        z2[3] *= 11.0
        b = obj.nt_xent(obj.build_similarity_matrix(T.Tensor(z2)), 0.3).item()
        assert a == pytest.approx(b, abs=1e-5)

    def test_permutation_equivariance(self):
        n = 4
        z = randz((2 * n, 5), 6) + 0.05
        perm = np.random.default_rng(0).permutation(n)
        zp = np.concatenate([z[:n][perm], z[n:][perm]])
        a = obj.nt_xent(obj.build_similarity_matrix(T.Tensor(z)), 0.2).item()
        b = obj.nt_xent(obj.build_similarity_matrix(T.Tensor(zp)), 0.2).item()
        assert a == pytest.approx(b, abs=1e-5)


class TestSimSiam:
    def test_perfect_alignment(self):
        a = T.Tensor(randz((4, 6), 1) + 0.05)
        assert obj.simsiam_loss(a, a, a, a).item() == pytest.approx(-1.0, abs=1e-6)

    def test_orthogonal_views(self):
        p = T.Tensor(np.array([[1.0, 0.0]] * 3, dtype=np.float32))
        z = T.Tensor(np.array([[0.0, 1.0]] * 3, dtype=np.float32))
        assert obj.simsiam_loss(p, z, p, z).item() == pytest.approx(0.0, abs=1e-6)

    def test_z_branch_gradient_is_zero(self):
        p = T.Tensor(randz((4, 6), 2), requires_grad=True)
        z = T.Tensor(randz((4, 6), 3), requires_grad=True)
        obj.simsiam_loss(p, z, p, z).backward()
        assert z.grad is None
        assert p.grad is not None

    @pytest.mark.parametrize("seed", range(5))
    def test_p_branch_gradient(self, seed):
        z1 = T.Tensor(randz((4, 6), seed + 100) + 0.05)
        z2 = T.Tensor(randz((4, 6), seed + 200) + 0.05)

        def f(p):
            return obj.simsiam_loss(p, z1, p, z2)

        assert T.finite_diff_check(f, T.Tensor(randz((4, 6), seed) + 0.05)) < 1e-3


class TestEma:
    def make_pair(self):
        cfg = EncoderParams(conv_widths=[2], latent_dim=8, proj_hidden=4,
                            pred_hidden=4, n_prototypes=4)
        student = init_state(cfg, 0)
        teacher = obj.TeacherState.from_student(student)
        return teacher, student

    def test_simple_step(self):
        teacher, student = self.make_pair()
        teacher.model.params[...] = 1.0
        student.params[...] = 0.0
        obj.ema_update(teacher, student, 0.99)
        np.testing.assert_allclose(teacher.model.params, 0.99, atol=1e-6)

    def test_m_zero_copies_student(self):
        teacher, student = self.make_pair()
        obj.ema_update(teacher, student, 0.0)
        np.testing.assert_array_equal(teacher.model.params, student.params)

    @pytest.mark.parametrize("k", [1, 5, 50])
    def test_geometric_gap_shrinkage(self, k):
        teacher, student = self.make_pair()
        teacher.model.params[...] = student.params + 1.0
        gap0 = np.linalg.norm(teacher.model.params - student.params)
        for _ in range(k):
            obj.ema_update(teacher, student, 0.9)
        gap = np.linalg.norm(teacher.model.params - student.params)
        assert gap / gap0 == pytest.approx(0.9 ** k, abs=1e-5)

    def test_student_untouched(self):
        teacher, student = self.make_pair()
        before = student.params.copy()
        obj.ema_update(teacher, student, 0.5)
        assert np.array_equal(student.params, before)

    def test_invalid_momentum(self):
        teacher, student = self.make_pair()
        with pytest.raises(obj.ObjectiveError):
            obj.ema_update(teacher, student, 1.0)


class TestMoco:
    def test_empty_queue_zero_loss(self):
        q = T.Tensor(randz((4, 8), 0) + 0.05)
        queue = obj.MemoryQueue(16, 8)
        assert obj.moco_loss(q, q.data, queue, 0.2).item() == 0.0

    def test_closed_form_eight_orthogonal_negatives(self):
        d = 16
        qv = np.zeros((1, d), dtype=np.float32)
        qv[0, 0] = 1.0
        queue = obj.MemoryQueue(16, d)
        negs = np.zeros((8, d), dtype=np.float32)
        for i in range(8):
            negs[i, i + 1] = 1.0
        queue.enqueue(negs)
        loss = obj.moco_loss(T.Tensor(qv), qv, queue, 1.0, enqueue=False)
        assert loss.item() == pytest.approx(-np.log(np.e / (np.e + 8)), abs=1e-5)
        assert loss.item() == pytest.approx(1.3720, abs=1e-4)

    def test_ring_buffer_eviction(self):
        queue = obj.MemoryQueue(8, 4)
        first = randz((8, 4), 1) + 0.1
        queue.enqueue(first)
        marker = queue.view()[:3].copy()
        queue.enqueue(randz((3, 4), 2) + 0.1)
        assert len(queue) == 8
        # oldest 3 rows were overwritten
        assert not np.allclose(queue.view()[:3], marker)

    def test_entries_unit_norm(self):
        queue = obj.MemoryQueue(8, 4)
        queue.enqueue(randz((5, 4), 3) * 7 + 0.1)
        np.testing.assert_allclose(np.linalg.norm(queue.view(), axis=1), 1.0, atol=1e-5)

    def test_keys_enqueued_after_loss(self):
        queue = obj.MemoryQueue(8, 4)
        q = T.Tensor(randz((2, 4), 4) + 0.1)
        obj.moco_loss(q, q.data, queue, 0.2)
        assert len(queue) == 2

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient(self, seed):
        queue = obj.MemoryQueue(16, 6)
        queue.enqueue(randz((5, 6), seed + 100) + 0.05)
        k_plus = randz((4, 6), seed + 200) + 0.05

        def f(qt):
            return obj.moco_loss(qt, k_plus, queue, 0.2, enqueue=False)

        assert T.finite_diff_check(f, T.Tensor(randz((4, 6), seed) + 0.05)) < 1e-3

    def test_teacher_branch_carries_no_gradient(self):
        queue = obj.MemoryQueue(8, 4)
        k = T.Tensor(randz((2, 4), 5) + 0.1, requires_grad=True)
        q = T.Tensor(randz((2, 4), 6) + 0.1, requires_grad=True)
        obj.moco_loss(q, k.data, queue, 0.2).backward()
        assert k.grad is None and q.grad is not None

    def test_scale_invariance(self):
        queue = obj.MemoryQueue(8, 4)
        queue.enqueue(randz((4, 4), 7) + 0.1)
        q = randz((3, 4), 8) + 0.1
        k = randz((3, 4), 9) + 0.1
        a = obj.moco_loss(T.Tensor(q), k, queue, 0.2, enqueue=False).item()
        b = obj.moco_loss(T.Tensor(5 * q), 3 * k, queue, 0.2, enqueue=False).item()
        assert a == pytest.approx(b, abs=1e-5)


def sinkhorn_oracle(scores, eps, iters=2000):
    """Independent fixed-point iteration run to convergence."""
    s = np.asarray(scores, dtype=np.float64)
    b, k = s.shape
    p = np.exp((s - s.max()) / eps)
    for _ in range(iters):
        p *= (b / k) / p.sum(axis=0, keepdims=True)
        p /= p.sum(axis=1, keepdims=True)
    return p


class TestSinkhorn:
    def test_uniform_scores(self):
        q = obj.sinkhorn(np.zeros((6, 4)), 0.5, 10)
        np.testing.assert_allclose(q, 0.25, atol=1e-8)

    def test_two_by_two_identity(self):
        scores = np.array([[10.0, 0.0], [0.0, 10.0]])
        q = obj.sinkhorn(scores, 1.0, 50)
        np.testing.assert_allclose(q, np.eye(2), atol=1e-3)

    def test_marginals_after_50_iters(self):
        scores = np.random.default_rng(0).standard_normal((16, 8))
        q = obj.sinkhorn(scores, 0.5, 50)
        np.testing.assert_allclose(q.sum(axis=1), 1.0, atol=1e-6)
        np.testing.assert_allclose(q.sum(axis=0), 16 / 8, atol=1e-4)

    def test_matches_converged_oracle(self):
        scores = np.random.default_rng(3).standard_normal((8, 4))
        q = obj.sinkhorn(scores, 0.5, 200)
        np.testing.assert_allclose(q, sinkhorn_oracle(scores, 0.5), atol=1e-6)

    def test_rows_are_distributions(self):
        scores = np.random.default_rng(1).standard_normal((10, 5)) * 4
        q = obj.sinkhorn(scores, 0.05, 3)
        assert np.all(q >= 0)
        np.testing.assert_allclose(q.sum(axis=1), 1.0, atol=1e-6)

    def test_column_deviation_shrinks_with_iterations(self):
        scores = np.random.default_rng(2).standard_normal((12, 6))
        target = 12 / 6
        devs = [np.abs(obj.sinkhorn(scores, 0.5, it).sum(axis=0) - target).max()
                for it in (1, 5, 20, 80)]
        assert all(a >= b - 1e-12 for a, b in zip(devs, devs[1:]))

    def test_bad_args(self):
        with pytest.raises(obj.ObjectiveError):
            obj.sinkhorn(np.zeros((2, 2)), 0.0, 5)
        with pytest.raises(obj.ObjectiveError):
            obj.sinkhorn(np.zeros((2, 2)), 0.5, 0)


class TestSwav:
    CFG = obj.LossConfig(sinkhorn_eps=0.5, sinkhorn_iters=50, tau=0.2)

    def test_needs_two_globals(self):
        with pytest.raises(obj.ObjectiveError):
            obj.swav_loss([T.Tensor(randz((4, 5)))], [T.Tensor(randz((4, 5)))], self.CFG)

    def test_agreeing_one_hots_near_zero(self):
        # strongly peaked logits on matching prototypes: swapped CE ~ 0
        logits = np.full((4, 4), -20.0, dtype=np.float32)
        np.fill_diagonal(logits, 20.0)
        g = [T.Tensor(logits), T.Tensor(logits)]
        cfg = obj.LossConfig(sinkhorn_eps=0.05, sinkhorn_iters=50, tau=0.05)
        assert obj.swav_loss(g, g, cfg).item() == pytest.approx(0.0, abs=1e-3)

    def test_uniform_prediction_pays_ln_k(self):
        k = 5
        peaked = np.full((k, k), -20.0, dtype=np.float32)
        np.fill_diagonal(peaked, 20.0)
        flat = np.zeros((k, k), dtype=np.float32)
        cfg = obj.LossConfig(sinkhorn_eps=0.05, sinkhorn_iters=50, tau=0.2)
        g = [T.Tensor(peaked), T.Tensor(peaked)]
        loss = obj.swav_loss(g, g + [T.Tensor(flat)], cfg)
        # per (v, flat) pair each sample pays ln k; two globals and 2N=2k rows
        # total = (2 agreeing terms ~ 0) + 2 * k * ln(k) / (2k)
        assert loss.item() == pytest.approx(np.log(k), abs=1e-2)

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_through_prediction_branch(self, seed):
        g0 = T.Tensor(randz((4, 5), seed + 10) * 0.5)
        g1 = T.Tensor(randz((4, 5), seed + 20) * 0.5)

        def f(local):
            return obj.swav_loss([g0, g1], [g0, g1, local], self.CFG)

        assert T.finite_diff_check(f, T.Tensor(randz((4, 5), seed) * 0.5)) < 1e-3

    def test_sinkhorn_target_branch_no_gradient(self):
        # analytic grad of a global's logits must match finite differences
        # computed with its Sinkhorn target held fixed
        g0d = randz((4, 5), 30) * 0.5
        g1 = T.Tensor(randz((4, 5), 31) * 0.5)
        cfg = self.CFG
        q0 = obj.sinkhorn(g0d, cfg.sinkhorn_eps, cfg.sinkhorn_iters)
        q1 = obj.sinkhorn(g1.data, cfg.sinkhorn_eps, cfg.sinkhorn_iters)

        def fixed_q_loss(g0t):
            total = None
            for q, v in ((q0, 0), (q1, 1)):
                for vp, logits in enumerate([g0t, g1]):
                    if vp == v:
                        continue
                    logp = T.log(T.softmax(logits * (1.0 / cfg.tau), axis=1))
                    term = -(T.Tensor(q) * logp).sum()
                    total = term if total is None else total + term
            return total * (1.0 / 8)

        g0 = T.Tensor(g0d, requires_grad=True)
        obj.swav_loss([g0, g1], [g0, g1], cfg).backward()
        analytic = g0.grad.copy()
        err = T.finite_diff_check(fixed_q_loss, T.Tensor(g0d), 1e-3)
        assert err < 1e-3
        g0b = T.Tensor(g0d, requires_grad=True)
        fixed_q_loss(g0b).backward()
        np.testing.assert_allclose(analytic, g0b.grad, atol=1e-5)


def brute_force_two_partition(points):
    """Optimal 2-cluster assignment by exhaustive enumeration."""
    n = len(points)
    best, best_cost = None, np.inf
    for mask in range(1, 2 ** (n - 1)):
        sel = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
        if sel.all() or (~sel).all():
            continue
        cost = 0.0
        for side in (sel, ~sel):
            c = points[side].mean(axis=0)
            cost += ((points[side] - c) ** 2).sum()
        if cost < best_cost:
            best, best_cost = sel.copy(), cost
    return best


class TestKmeans:
    def test_two_separated_clouds_match_bruteforce(self):
        rng = np.random.default_rng(0)
        pts = np.concatenate([rng.normal(0, 0.3, (10, 2)), rng.normal(5, 0.3, (10, 2))])
        labels, _ = obj.kmeans(pts, 2, seed=1)
        oracle = brute_force_two_partition(pts)
        agree = (labels == labels[np.argmax(oracle)]).astype(bool)
        assert np.array_equal(agree, oracle) or np.array_equal(agree, ~oracle)

    def test_k1_centroid_is_mean(self):
        pts = np.random.default_rng(1).standard_normal((20, 3))
        _, centroids = obj.kmeans(pts, 1, seed=0)
        np.testing.assert_allclose(centroids[0], pts.mean(axis=0), atol=1e-5)

    def test_objective_non_increasing(self):
        pts = np.random.default_rng(2).standard_normal((60, 4))
        _, _, history = obj.kmeans(pts, 5, seed=0, return_history=True)
        assert all(a >= b - 1e-9 for a, b in zip(history, history[1:]))

    def test_n_less_than_k_raises(self):
        with pytest.raises(obj.ObjectiveError):
            obj.kmeans(np.zeros((2, 2)), 3, seed=0)

    def test_deterministic(self):
        pts = np.random.default_rng(3).standard_normal((30, 3))
        l1, c1 = obj.kmeans(pts, 4, seed=9)
        l2, c2 = obj.kmeans(pts, 4, seed=9)
        assert np.array_equal(l1, l2) and np.array_equal(c1, c2)


class TestDeepCluster:
    def test_one_hot_correct_zero(self):
        probs = T.Tensor(np.eye(4, dtype=np.float32) * (1 - 4e-7) + 1e-7)
        assert obj.deepcluster_loss(probs, np.arange(4)).item() == pytest.approx(0.0, abs=1e-5)

    def test_uniform_ln_k(self):
        k = 6
        probs = T.Tensor(np.full((5, k), 1 / k, dtype=np.float32))
        labels = np.array([0, 3, 5, 1, 2])
        assert obj.deepcluster_loss(probs, labels).item() == pytest.approx(np.log(k), abs=1e-5)

    def test_label_out_of_range(self):
        probs = T.Tensor(np.full((2, 3), 1 / 3, dtype=np.float32))
        with pytest.raises(obj.ObjectiveError):
            obj.deepcluster_loss(probs, np.array([0, 3]))

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_on_logits(self, seed):
        labels = np.random.default_rng(seed).integers(0, 5, size=6)

        def f(logits):
            return obj.deepcluster_loss(T.softmax(logits, axis=1), labels)

        assert T.finite_diff_check(f, T.Tensor(randz((6, 5), seed))) < 1e-3


class TestDino:
    def make_teacher(self, k=5):
        cfg = EncoderParams(conv_widths=[2], latent_dim=8, proj_hidden=4,
                            pred_hidden=4, n_prototypes=k)
        return obj.TeacherState.from_student(init_state(cfg, 0))

    CFG = obj.LossConfig(tau_s=0.1, tau_t=0.04, center_momentum=0.9)

    def test_matching_one_hots_near_zero(self):
        k = 4
        teacher = self.make_teacher(k)
        peaked = np.full((k, k), -6.0, dtype=np.float32)
        np.fill_diagonal(peaked, 6.0)
        s = [T.Tensor(peaked * 10), T.Tensor(peaked * 10)]
        t = [peaked, peaked]
        loss = obj.dino_loss(s, t, teacher, self.CFG, update_center=False)
        assert loss.item() == pytest.approx(0.0, abs=1e-3)

    def test_uniform_student_pays_ln_k(self):
        k = 5
        teacher = self.make_teacher(k)
        peaked = np.full((k, k), -6.0, dtype=np.float32)
        np.fill_diagonal(peaked, 6.0)
        flat = T.Tensor(np.zeros((k, k), dtype=np.float32))
        # two flat student views vs two peaked teacher views: the two cross
        # terms each pay ln k, normalized by 1/(n_s * n_t) = 1/4
        loss = obj.dino_loss([flat, flat], [peaked, peaked], teacher,
                             self.CFG, update_center=False)
        assert loss.item() == pytest.approx(np.log(k) / 2, abs=1e-2)

    def test_all_same_view_pairs_raise(self):
        teacher = self.make_teacher(4)
        v = T.Tensor(np.zeros((2, 4), dtype=np.float32))
        with pytest.raises(obj.ObjectiveError):
            obj.dino_loss([v], [v.data], teacher, self.CFG, update_center=False)

    def test_teacher_gradient_zero(self):
        teacher = self.make_teacher(4)
        t0 = T.Tensor(randz((3, 4), 1), requires_grad=True)
        s = [T.Tensor(randz((3, 4), 2), requires_grad=True) for _ in range(3)]
        obj.dino_loss(s, [t0, t0], teacher, self.CFG, update_center=False).backward()
        assert t0.grad is None
        assert all(si.grad is not None for si in s)

    @pytest.mark.parametrize("seed", range(5))
    def test_student_gradient(self, seed):
        teacher = self.make_teacher(4)
        t_logits = [randz((3, 4), seed + 10), randz((3, 4), seed + 20)]
        others = [T.Tensor(randz((3, 4), seed + 30))]

        def f(s0):
            return obj.dino_loss([s0] + others, t_logits, teacher, self.CFG,
                                 update_center=False)

        assert T.finite_diff_check(f, T.Tensor(randz((3, 4), seed))) < 1e-3

    def test_center_update_recurrence(self):
        teacher = self.make_teacher(4)
        teacher.center = np.ones(4, dtype=np.float32)
        t_logits = [np.zeros((2, 4), dtype=np.float32)] * 2
        s = [T.Tensor(np.zeros((2, 4), dtype=np.float32))] * 3
        obj.dino_loss(s, t_logits, teacher, self.CFG, update_center=True)
        np.testing.assert_allclose(teacher.center, 0.9, atol=1e-6)

    def test_temperature_ordering_enforced(self):
        with pytest.raises(obj.ObjectiveError):
            obj.LossConfig(tau_s=0.04, tau_t=0.1).validate()


@pytest.mark.parametrize("seed", range(100))
def test_every_loss_finite_on_gaussian_latents(seed):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((8, 6)).astype(np.float32)
    assert np.isfinite(obj.nt_xent(obj.build_similarity_matrix(T.Tensor(z)), 0.2).item())
    p = T.Tensor(rng.standard_normal((4, 6)).astype(np.float32))
    zz = T.Tensor(rng.standard_normal((4, 6)).astype(np.float32))
    assert np.isfinite(obj.simsiam_loss(p, zz, p, zz).item())
    queue = obj.MemoryQueue(16, 6)
    queue.enqueue(rng.standard_normal((5, 6)).astype(np.float32))
    assert np.isfinite(obj.moco_loss(T.Tensor(z[:4]), z[4:8], queue, 0.2).item())
    logits = [T.Tensor(rng.standard_normal((4, 5)).astype(np.float32) * 0.5)
              for _ in range(3)]
    cfg = obj.LossConfig()
    assert np.isfinite(obj.swav_loss(logits[:2], logits, cfg).item())
    labels = rng.integers(0, 5, size=4)
    assert np.isfinite(obj.deepcluster_loss(T.softmax(logits[0], axis=1), labels).item())
    teacher = obj.TeacherState.from_student(
        init_state(EncoderParams(conv_widths=[2], latent_dim=8, proj_hidden=4,
                                 pred_hidden=4, n_prototypes=5), 0))
    assert np.isfinite(obj.dino_loss(logits, [l.data for l in logits[:2]],
                                     teacher, cfg, update_center=False).item())
