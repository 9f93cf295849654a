import numpy as np
import pytest

from qncd.errors import ConvergenceError, ValidationError
from qncd.svm import (
    KernelSpec,
    decision_function,
    kernel_eval,
    kkt_violations,
    kernel_matrix,
    model_from_json,
    model_to_json,
    predict_svm,
    train_svm,
)

RBF1 = KernelSpec("rbf", gamma=1.0)
LINEAR = KernelSpec("linear")


def brute_force_dual_objective(K, y, C, rounds=80, grid=13, zooms=5):
    """Maximize the SVM dual by pairwise coordinate ascent with grid zooming.

    Shares no formulas with the SMO path: each pair's 1-D subproblem is
    solved by exhaustive grid refinement of the objective itself.
    """
    n = len(y)
    Q = (y[:, None] * y[None, :]) * K
    alpha = np.zeros(n)

    def objective(a):
        return a.sum() - 0.5 * a @ Q @ a

    best = objective(alpha)
    for _ in range(rounds):
        improved = False
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                # move alpha_i by y_i*s and alpha_j by -y_j*s: keeps sum(alpha*y)
                if y[i] > 0:
                    lo_i, hi_i = -alpha[i], C - alpha[i]
                else:
                    lo_i, hi_i = alpha[i] - C, alpha[i]
                if y[j] > 0:
                    lo_j, hi_j = alpha[j] - C, alpha[j]
                else:
                    lo_j, hi_j = -alpha[j], C - alpha[j]
                lo, hi = max(lo_i, lo_j), min(hi_i, hi_j)
                if hi - lo < 1e-12:
                    continue
                span_lo, span_hi = lo, hi
                s_best, v_best = 0.0, best
                for _zoom in range(zooms):
                    for s in np.linspace(span_lo, span_hi, grid):
                        cand = alpha.copy()
                        cand[i] += y[i] * s
                        cand[j] -= y[j] * s
                        v = objective(cand)
                        if v > v_best:
                            v_best, s_best = v, s
                    width = (span_hi - span_lo) / (grid - 1)
                    span_lo = max(lo, s_best - width)
                    span_hi = min(hi, s_best + width)
                if v_best > best + 1e-12:
                    alpha[i] += y[i] * s_best
                    alpha[j] -= y[j] * s_best
                    best = v_best
                    improved = True
        if not improved:
            break
    return best


def brute_force_margin_2d(X, y):
    """Maximal geometric margin of a separable 2-D set by direction search."""

    def margin(theta):
        w = np.array([np.cos(theta), np.sin(theta)])
        proj = X @ w
        m1 = (proj[y == 1].min() - proj[y == -1].max()) / 2
        m2 = (-proj[y == 1].max() + proj[y == -1].min()) / 2
        return max(m1, m2)

    thetas = np.linspace(0.0, np.pi, 20_000, endpoint=False)
    vals = np.array([margin(t) for t in thetas])
    k = int(vals.argmax())
    lo, hi = thetas[k] - np.pi / 20_000, thetas[k] + np.pi / 20_000
    for _ in range(60):
        mid1, mid2 = lo + (hi - lo) / 3, hi - (hi - lo) / 3
        if margin(mid1) < margin(mid2):
            lo = mid1
        else:
            hi = mid2
    return margin((lo + hi) / 2)


class TestKernels:
    def test_rbf_self_similarity(self):
        x = np.array([0.3, -1.2, 4.0])
        assert kernel_eval(KernelSpec("rbf", gamma=2.5), x, x) == pytest.approx(1.0)

    def test_linear_dot(self):
        assert kernel_eval(LINEAR, np.array([1.0, 2.0]), np.array([3.0, 4.0])) == 11.0

    def test_poly_orthogonal(self):
        spec = KernelSpec("poly", degree=2, scale=1.0, offset=1.0)
        assert kernel_eval(spec, np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            kernel_eval(LINEAR, np.zeros(2), np.zeros(3))

    def test_matrix_symmetry(self):
        rng = np.random.default_rng(0)
        xs = rng.normal(size=(10, 4))
        k = kernel_matrix(RBF1, xs)
        assert np.allclose(k, k.T)

    def test_invalid_specs(self):
        with pytest.raises(ValidationError):
            KernelSpec("poly", degree=5, scale=1.0, offset=1.0)
        with pytest.raises(ValidationError):
            KernelSpec("rbf", gamma=-1.0)
        with pytest.raises(ValidationError):
            KernelSpec("sigmoid")


class TestTrainBasics:
    def test_two_points_boundary_at_half(self):
        xs = np.array([[0.0], [1.0]])
        y = np.array([-1.0, 1.0])
        model = train_svm(xs, y, LINEAR, c=1e6, tol=1e-6)
        assert decision_function(model, np.array([[0.5]]))[0] == pytest.approx(0.0, abs=1e-6)
        assert predict_svm(model, np.array([0.0]))[0] == 0
        assert predict_svm(model, np.array([1.0]))[0] == 1

    def test_xor_rbf_separates(self):
        xs = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
        y = np.array([1.0, 1.0, -1.0, -1.0])
        model = train_svm(xs, y, RBF1, c=10.0, tol=1e-6)
        assert np.array_equal(np.sign(decision_function(model, xs)), y)

    def test_xor_dual_matches_brute_force(self):
        xs = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
        y = np.array([1.0, 1.0, -1.0, -1.0])
        model = train_svm(xs, y, RBF1, c=10.0, tol=1e-8)
        smo_obj = model.diagnostics.objective_trace[-1]
        oracle = brute_force_dual_objective(kernel_matrix(RBF1, xs), y, C=10.0)
        assert smo_obj == pytest.approx(oracle, rel=1e-3)

    def test_needs_both_labels(self):
        with pytest.raises(ValidationError):
            train_svm(np.zeros((3, 1)), np.ones(3), LINEAR, c=1.0)

    def test_iteration_cap_raises_with_violation(self):
        rng = np.random.default_rng(1)
        xs = rng.normal(size=(60, 3))
        y = np.where(xs[:, 0] + 0.3 * rng.normal(size=60) > 0, 1.0, -1.0)
        with pytest.raises(ConvergenceError) as exc:
            train_svm(xs, y, RBF1, c=10.0, tol=1e-9, max_iter=3)
        assert exc.value.violation is not None and exc.value.violation > 1e-9


def make_blobs(seed, n=40, separation=2.0):
    rng = np.random.default_rng(seed)
    half = n // 2
    xs = np.vstack(
        [
            rng.normal(loc=(-separation, 0.0), scale=0.6, size=(half, 2)),
            rng.normal(loc=(separation, 0.0), scale=0.6, size=(half, 2)),
        ]
    )
    y = np.concatenate([-np.ones(half), np.ones(half)])
    return xs, y


class TestOptimalityCertificates:
    def test_linear_margin_matches_direction_search(self):
        xs, y = make_blobs(2, n=24, separation=2.5)
        model = train_svm(xs, y, LINEAR, c=1e5, tol=1e-8)
        preds = np.sign(decision_function(model, xs))
        assert np.array_equal(preds, y)
        w = model.duals @ model.support_vectors
        assert 1.0 / np.linalg.norm(w) == pytest.approx(brute_force_margin_2d(xs, y), abs=1e-3)

    @pytest.mark.parametrize("seed,kernel,c", [(3, RBF1, 5.0), (4, LINEAR, 2.0), (5, KernelSpec("poly", degree=3, scale=0.5, offset=1.0), 3.0)])
    def test_small_instances_match_brute_force(self, seed, kernel, c):
        rng = np.random.default_rng(seed)
        xs = rng.normal(size=(10, 3))
        y = np.where(rng.random(10) > 0.5, 1.0, -1.0)
        if np.all(y == y[0]):
            y[0] = -y[0]
        model = train_svm(xs, y, kernel, c=c, tol=1e-8)
        oracle = brute_force_dual_objective(kernel_matrix(kernel, xs), y, C=c)
        assert model.diagnostics.objective_trace[-1] == pytest.approx(oracle, rel=1e-3, abs=1e-6)

    def test_kkt_certificate(self):
        xs, y = make_blobs(6, n=60, separation=1.2)
        tol = 1e-3
        model = train_svm(xs, y, RBF1, c=3.0, tol=tol)
        viol = kkt_violations(model, xs, y)
        assert viol["zero"] <= tol
        assert viol["free"] <= tol
        assert viol["bound"] <= tol

    def test_free_support_vector_on_margin(self):
        xs, y = make_blobs(7, n=50, separation=1.0)
        model = train_svm(xs, y, RBF1, c=2.0, tol=1e-4)
        alpha = model.diagnostics.alpha
        free = (alpha > 1e-8) & (alpha < model.c - 1e-8)
        assert free.any()
        values = decision_function(model, xs[free])
        assert np.abs(np.abs(values) - 1.0).max() <= 1e-3

    def test_dual_objective_nondecreasing(self):
        xs, y = make_blobs(8, n=80, separation=0.8)
        model = train_svm(xs, y, RBF1, c=5.0)
        trace = np.array(model.diagnostics.objective_trace)
        assert np.all(np.diff(trace) >= -1e-9)

    def test_dual_feasibility(self):
        xs, y = make_blobs(9, n=40)
        model = train_svm(xs, y, RBF1, c=1.0)
        assert abs(model.duals.sum()) <= 1e-8
        assert np.all(np.abs(model.duals) <= model.c + 1e-12)


class TestPrediction:
    def test_label_flip_negates_decisions(self):
        xs, y = make_blobs(10, n=30, separation=1.0)
        m1 = train_svm(xs, y, RBF1, c=2.0, tol=1e-6)
        m2 = train_svm(xs, -y, RBF1, c=2.0, tol=1e-6)
        probe = np.random.default_rng(11).normal(size=(12, 2))
        assert np.allclose(decision_function(m1, probe), -decision_function(m2, probe), atol=1e-6)

    def test_prediction_determinism(self):
        xs, y = make_blobs(12, n=30)
        m1 = train_svm(xs, y, RBF1, c=2.0)
        m2 = train_svm(xs, y, RBF1, c=2.0)
        probe = np.random.default_rng(13).normal(size=(5, 2))
        assert np.array_equal(decision_function(m1, probe), decision_function(m2, probe))

    def test_dimension_mismatch(self):
        xs, y = make_blobs(14, n=20)
        model = train_svm(xs, y, LINEAR, c=1.0)
        with pytest.raises(ValidationError):
            predict_svm(model, np.zeros(5))

    def test_json_roundtrip(self):
        xs, y = make_blobs(15, n=26)
        model = train_svm(xs, y, KernelSpec("poly", degree=2, scale=0.1, offset=1.0), c=4.0)
        clone = model_from_json(model_to_json(model))
        probe = np.random.default_rng(16).normal(size=(9, 2))
        assert np.allclose(decision_function(model, probe), decision_function(clone, probe))
        assert clone.kernel == model.kernel
        assert clone.feature_mode == model.feature_mode
