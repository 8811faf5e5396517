import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ransomlab.classifiers.detectors import (
    CLASSICAL_KINDS,
    Detector,
    adversarial_detection_rate,
    build_detector,
    evaluate,
    extract_latent,
    load_detector,
    make_classical,
    save_detector,
)
from ransomlab.classifiers.forest import DecisionTree, RandomForest
from ransomlab.classifiers.linear import LDA, LogisticRegression, NaiveBayes, ledoit_wolf
from ransomlab.classifiers.metrics import (
    REPORT_COLUMNS,
    MetricsReport,
    auc_score,
    reports_to_csv,
    roc_curve,
)
from ransomlab.classifiers.svm import SVM
from ransomlab.classifiers.textcnn import TextCNN, TextCnnConfig, train_textcnn
from ransomlab.errors import DegenerateLabels, EmptySet, ShapeError
from ransomlab.logmodel import LOG_LENGTH


def xor_data(rng, n=400):
    X = rng.uniform(-1, 1, size=(n, 2))
    y = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(int)
    return X, y


def blobs(rng, n=200, d=4, sep=6.0):
    X0 = rng.normal(size=(n, d))
    X1 = rng.normal(size=(n, d)) + sep
    return np.vstack([X0, X1]), np.r_[np.zeros(n, int), np.ones(n, int)]


# -- metrics ----------------------------------------------------------------------------

def test_perfect_classifier_metrics():
    y = np.array([0, 0, 1, 1, 1])
    rep = MetricsReport.from_predictions(y, y, y.astype(float))
    assert (rep.accuracy, rep.fpr, rep.tpr, rep.f1, rep.auc) == (1.0, 0.0, 1.0, 1.0, 1.0)


def test_metrics_consistent_with_confusion_counts():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 200)
    s = rng.random(200)
    rep = MetricsReport.from_predictions(y, (s > 0.5).astype(int), s)
    assert rep.tp + rep.fp + rep.tn + rep.fn == 200
    assert rep.accuracy == (rep.tp + rep.tn) / 200
    assert rep.fpr == rep.fp / (rep.fp + rep.tn)
    assert rep.tpr == rep.tp / (rep.tp + rep.fn)
    prec = rep.tp / (rep.tp + rep.fp)
    assert rep.f1 == pytest.approx(2 * prec * rep.tpr / (prec + rep.tpr))


def test_metrics_single_class_raises():
    with pytest.raises(DegenerateLabels):
        MetricsReport.from_predictions([1, 1], [1, 0], [0.9, 0.1])
    with pytest.raises(EmptySet):
        MetricsReport.from_predictions([], [], [])


def test_auc_matches_sklearn_with_ties():
    from sklearn.metrics import roc_auc_score
    rng = np.random.default_rng(1)
    y = rng.integers(0, 2, 300)
    s = np.round(rng.random(300) + 0.3 * y, 1)   # many ties
    assert auc_score(y, s) == pytest.approx(roc_auc_score(y, s), abs=1e-12)


def test_roc_endpoints():
    fpr, tpr, thr = roc_curve([0, 1, 0, 1], [0.1, 0.9, 0.4, 0.35])
    assert (fpr[0], tpr[0], fpr[-1], tpr[-1]) == (0.0, 0.0, 1.0, 1.0)
    assert auc_score([0, 1, 0, 1], [0.1, 0.9, 0.4, 0.35]) == 0.75


def test_auc_permutation_near_half():
    rng = np.random.default_rng(2)
    y = np.r_[np.zeros(500, int), np.ones(500, int)]
    s = rng.permutation(1000) / 1000.0
    assert 0.45 <= auc_score(y, s) <= 0.55


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-50, 50), min_size=4, max_size=40), st.integers(0, 2**32 - 1))
def test_auc_invariant_under_monotone_transform(scores, seed):
    s = np.array(scores, dtype=np.float64) / 10
    y = np.random.default_rng(seed).integers(0, 2, s.size)
    y[0], y[1] = 0, 1
    assert auc_score(y, np.exp(0.5 * s) + 3) == pytest.approx(auc_score(y, s), abs=1e-12)


def test_reports_csv_columns():
    y = np.array([0, 1])
    text = reports_to_csv({"x": MetricsReport.from_predictions(y, y, y)})
    assert text.splitlines()[0].split(",") == REPORT_COLUMNS


# -- classical models ---------------------------------------------------------------------

def test_naive_bayes_matches_sklearn():
    from sklearn.naive_bayes import GaussianNB
    rng = np.random.default_rng(3)
    X, y = blobs(rng, sep=1.0)
    ours = NaiveBayes().fit(X, y).predict_proba(X)
    ref = GaussianNB().fit(X, y).predict_proba(X)[:, 1]
    assert np.allclose(ours, ref, atol=1e-8)


def test_naive_bayes_identical_classes_predicts_majority():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(1000, 3))
    y = (rng.random(1000) < 0.7).astype(int)
    acc = np.mean(NaiveBayes().fit(X, y).predict(X) == y)
    assert abs(acc - 0.7) < 0.05


def test_ledoit_wolf_matches_sklearn():
    from sklearn.covariance import ledoit_wolf as sk_lw
    X = np.random.default_rng(5).normal(size=(40, 10))
    Xc = X - X.mean(axis=0)
    assert np.allclose(ledoit_wolf(Xc), sk_lw(Xc, assume_centered=True)[0], atol=1e-10)


def test_lda_separable_blobs():
    X, y = blobs(np.random.default_rng(6))
    assert np.mean(LDA().fit(X, y).predict(X) == y) == 1.0


def test_lda_equidistant_point_is_tie_to_benign():
    X = np.array([[-1.0, 0.0], [-1.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([0, 0, 1, 1])
    lda = LDA().fit(X, y)
    mid = np.array([[0.0, 0.5]])
    assert lda.predict_proba(mid)[0] == pytest.approx(0.5, abs=1e-12)
    assert lda.predict(mid)[0] == 0


def test_logistic_regression_matches_sklearn():
    from sklearn.linear_model import LogisticRegression as SkLR
    rng = np.random.default_rng(7)
    X, y = blobs(rng, sep=1.0)
    ours = LogisticRegression(C=1.0).fit(X, y)
    Z = ours.scaler.transform(X)
    ref = SkLR(C=1.0, tol=1e-10, max_iter=10_000).fit(Z, y)
    assert np.allclose(ours.coef, ref.coef_[0], atol=1e-4)
    assert ours.intercept == pytest.approx(ref.intercept_[0], abs=1e-4)


def test_svm_rbf_solves_xor_and_linear_models_do_not():
    rng = np.random.default_rng(8)
    X, y = xor_data(rng)
    Xt, yt = xor_data(rng)
    assert np.mean(SVM("rbf", C=10.0).fit(X, y).predict(Xt) == yt) >= 0.95
    for clf in (SVM("linear"), LDA(), LogisticRegression()):
        assert np.mean(clf.fit(X, y).predict(Xt) == yt) <= 0.6


def test_svm_decision_matches_sklearn():
    from sklearn.svm import SVC
    rng = np.random.default_rng(9)
    X, y = xor_data(rng, 150)
    ours = SVM("rbf", C=1.0, tol=1e-6).fit(X, y)
    Z = ours.scaler.transform(X)
    ref = SVC(C=1.0, kernel="rbf", gamma=ours.gamma_, tol=1e-6).fit(Z, y)
    assert np.allclose(ours.decision_function(X), ref.decision_function(Z), atol=1e-3)
    lin = SVM("linear", C=1.0, tol=1e-6).fit(X[:80] * 3, y[:80])
    ref_lin = SVC(C=1.0, kernel="linear", tol=1e-6).fit(lin.scaler.transform(X[:80] * 3), y[:80])
    assert np.allclose(lin.decision_function(X * 3),
                       ref_lin.decision_function(lin.scaler.transform(X * 3)), atol=1e-3)


def test_decision_tree_and_forest():
    rng = np.random.default_rng(10)
    X, y = xor_data(rng)
    tree = DecisionTree().fit(X, y)
    assert np.mean(tree.predict(X) == y) == 1.0   # grown to purity
    Xt, yt = xor_data(rng)
    rf = RandomForest(n_trees=30, seed=0).fit(X, y)
    assert np.mean(rf.predict(Xt) == yt) >= 0.9
    again = RandomForest(n_trees=30, seed=0).fit(X, y)
    assert np.array_equal(rf.predict_proba(Xt), again.predict_proba(Xt))


def test_tree_depth_limit():
    rng = np.random.default_rng(11)
    X, y = xor_data(rng)
    stump = DecisionTree(max_depth=1).fit(X, y)
    assert stump.n_nodes == 3


@pytest.mark.parametrize("kind", CLASSICAL_KINDS)
def test_classifier_validation(kind):
    clf = make_classical(kind)
    with pytest.raises(DegenerateLabels):
        clf.fit(np.zeros((4, 2)), np.ones(4, int))
    X, y = blobs(np.random.default_rng(12), n=20, d=3)
    clf.fit(X, y)
    with pytest.raises(ShapeError):
        clf.predict(np.zeros((2, 5)))
    p = clf.predict_proba(X)
    assert np.all((0 <= p) & (p <= 1))
    assert np.array_equal(clf.predict(X), clf.predict(X))
    assert np.mean(clf.predict(X) == y) == 1.0


def test_unknown_kind():
    with pytest.raises(ValueError):
        make_classical("xgb")


# -- Text-CNN -------------------------------------------------------------------------------

def _toy_corpus(rng, n=40, length=60):
    X = np.where(rng.random((n, length)) < 0.5, 2, 4)
    y = np.r_[np.zeros(n // 2, int), np.ones(n // 2, int)]
    X[y == 1] = 2
    X[y == 0] = 4
    return X, y


def test_textcnn_separable_toy():
    X, y = _toy_corpus(np.random.default_rng(13))
    model = train_textcnn(X, y, TextCnnConfig(epochs=5, batch_size=8))
    assert np.mean(model.predict(X) == y) == 1.0


def test_textcnn_is_deterministic(tmp_path):
    X, y = _toy_corpus(np.random.default_rng(14))
    cfg = TextCnnConfig(epochs=2, batch_size=8)
    a, b = train_textcnn(X, y, cfg), train_textcnn(X, y, cfg)
    a.save(tmp_path / "a.ckpt")
    b.save(tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    c = TextCNN.load(tmp_path / "a.ckpt")
    assert np.array_equal(c.predict_proba(X), a.predict_proba(X))


def test_textcnn_loss_decreases():
    X, y = _toy_corpus(np.random.default_rng(15))
    model = train_textcnn(X, y, TextCnnConfig(epochs=6, batch_size=8))
    assert model.loss_trace[-1] < model.loss_trace[0]


def test_textcnn_latent_shape_and_constancy():
    model = TextCNN()
    zeros = np.zeros((3, 100), dtype=np.int64)
    lat = extract_latent(model, zeros)
    assert lat.shape == (3, 32)
    # BLAS blocking may differ by row position in the last ulp
    assert np.allclose(lat, lat[0], rtol=0, atol=1e-12)
    assert np.array_equal(extract_latent(model, zeros), lat)
    with pytest.raises(ShapeError):
        model.latent(np.zeros((1, 2), dtype=np.int64))


def test_textcnn_gradient_wrt_parameters():
    from ransomlab.nncore.gradcheck import numeric_grad, relative_error
    from ransomlab.nncore.losses import softmax_cross_entropy
    rng = np.random.default_rng(16)
    model = TextCNN(TextCnnConfig(dropout=0.0))
    X = rng.integers(0, 10, size=(3, 12))
    y = np.array([0, 1, 1])
    _, d = softmax_cross_entropy(model.forward(X), y)
    model.backward(d)
    for name, p in model.named_parameters():
        g = dict(model.named_grads())[name].copy()
        num = numeric_grad(lambda v: (p.__setitem__(Ellipsis, v),
                                      softmax_cross_entropy(model.forward(X), y)[0])[1], p)
        assert relative_error(g, num) < 1e-4, name


# -- detectors on the default corpus ------------------------------------------------------------

def test_textcnn_detector_efficacy(textcnn, corpus_arrays):
    _, _, Xte, yte = corpus_arrays
    rep = evaluate(textcnn, Xte, yte)
    assert rep.accuracy >= 0.95 and rep.fpr <= 0.05


@pytest.fixture(scope="module")
def latent_suite(textcnn, corpus_arrays):
    Xtr, ytr, Xte, yte = corpus_arrays
    return {k: build_detector(f"{k}_latent", Xtr, ytr, textcnn) for k in CLASSICAL_KINDS}


def test_latent_classifiers_efficacy(latent_suite, corpus_arrays):
    _, _, Xte, yte = corpus_arrays
    for kind, det in latent_suite.items():
        assert det.evaluate(Xte, yte).accuracy >= 0.90, kind


def test_latent_composition_not_worse_than_raw(latent_suite, corpus_arrays):
    Xtr, ytr, Xte, yte = corpus_arrays
    for kind, det in latent_suite.items():
        raw = build_detector(f"{kind}_raw", Xtr, ytr)
        assert det.evaluate(Xte, yte).accuracy >= raw.evaluate(Xte, yte).accuracy, kind


def test_detector_save_load(tmp_path, latent_suite, textcnn, corpus_arrays):
    _, _, Xte, _ = corpus_arrays
    det = latent_suite["lda"]
    save_detector(det, tmp_path / "lda.ckpt")
    back = load_detector(tmp_path / "lda.ckpt")
    assert back.name == "lda_latent" and back.space == "latent"
    assert np.array_equal(back.predict_proba(Xte), det.predict_proba(Xte))
    save_detector(Detector("textcnn", textcnn), tmp_path / "t.ckpt")
    assert np.array_equal(load_detector(tmp_path / "t.ckpt").predict_proba(Xte[:5]),
                          textcnn.predict_proba(Xte[:5]))


def test_build_detector_errors(corpus_arrays):
    Xtr, ytr, _, _ = corpus_arrays
    with pytest.raises(ValueError):
        build_detector("lda_latent", Xtr, ytr)
    with pytest.raises(ValueError):
        build_detector("lda_sideways", Xtr, ytr)
    with pytest.raises(ValueError):
        build_detector("textcnn", Xtr, ytr)


# -- adversarial detection rate --------------------------------------------------------------------

class FlagFirst:
    """Flags the first ``k`` logs of any batch as malicious."""

    def __init__(self, k):
        self.k = k

    def predict(self, X):
        out = np.zeros(len(X), dtype=int)
        out[: self.k] = 1
        return out


@pytest.mark.parametrize("k,rate", [(457, 457 / 1257), (0, 0.0), (1257, 1.0)])
def test_adversarial_detection_rate_counts(k, rate):
    logs = np.zeros((1257, LOG_LENGTH), dtype=np.int8)
    assert adversarial_detection_rate(FlagFirst(k), logs) == rate


def test_adversarial_detection_rate_table_value():
    logs = np.zeros((1257, LOG_LENGTH), dtype=np.int8)
    assert adversarial_detection_rate(FlagFirst(457), logs) == pytest.approx(0.3635, abs=1e-4)


def test_adversarial_detection_rate_empty():
    with pytest.raises(EmptySet):
        adversarial_detection_rate(FlagFirst(0), [])
