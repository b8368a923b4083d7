import numpy as np
import pytest
from sklearn.base import clone
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import FunctionTransformer

from confrecon.estimators import METRIC_COLUMNS, CRAMetrics, CRAPolicyOptimizer
from confrecon.metrics import metric_report
from confrecon.model import ChannelPair, DomainError, Policy, SourceModel
from confrecon.optimizer import optimize

ROWS = np.array([[0.3, 0.4, 0.8, 0.3, 0.7], [0.2, 0.3, 0.9, 0.1, 0.5], [0.9, 0.9, 0.5, 0.5, 1.0]])


def test_metrics_transform_matches_library():
    out = CRAMetrics(omega=0.25).fit_transform(ROWS)
    assert out.shape == (3, len(METRIC_COLUMNS))
    for row, got in zip(ROWS, out):
        p, q, ps, pe, pa = row
        rep = metric_report(SourceModel(p, q), ChannelPair(ps, pe), Policy(pa), 0.25)
        assert got.tolist() == [rep.cra, rep.accuracy, rep.confidentiality,
                                rep.non_confidential_accuracy, rep.weighted]


def test_numeric_method_agrees():
    closed = CRAMetrics().fit_transform(ROWS)
    numeric = CRAMetrics(method="numeric").fit_transform(ROWS)
    assert np.abs(closed - numeric).max() < 1e-10


def test_params_and_clone():
    est = CRAMetrics(omega=0.1, method="numeric")
    assert est.get_params() == {"omega": 0.1, "method": "numeric"}
    twin = clone(est).set_params(omega=0.9)
    assert twin.omega == 0.9 and est.omega == 0.1
    assert list(CRAMetrics().fit(ROWS).get_feature_names_out()) == list(METRIC_COLUMNS)


def test_metrics_validation():
    with pytest.raises(DomainError):
        CRAMetrics(omega=2).fit(ROWS)
    with pytest.raises(ValueError):
        CRAMetrics(method="magic").fit(ROWS)
    with pytest.raises(ValueError):
        CRAMetrics().fit(ROWS[:, :4])
    with pytest.raises(ValueError):
        CRAMetrics().fit(np.array([[0.3, 0.4, np.nan, 0.3, 0.7]]))
    with pytest.raises(Exception):
        CRAMetrics().transform(ROWS)


def test_optimizer_estimator():
    X = ROWS[:, :4]
    est = CRAPolicyOptimizer(p_min=0.01).fit(X)
    expected = [optimize(SourceModel(p, q), ChannelPair(ps, pe), (0.01, 1.0)) for p, q, ps, pe in X]
    assert est.p_alpha_star_.tolist() == [r.p_alpha_star for r in expected]
    assert est.branch_[2] == "SymmetricAlternating"
    assert np.array_equal(est.predict(X), est.p_alpha_star_)
    assert est.score(X) == pytest.approx(np.mean([r.value for r in expected]))
    with pytest.raises(Exception):
        CRAPolicyOptimizer().predict(X)
    with pytest.raises(DomainError):
        CRAPolicyOptimizer(p_min=0.5, p_max=0.2).fit(X)


def test_pipeline_feeds_optimum_into_metrics():
    # append the optimal p_alpha to each row, then evaluate metrics at it
    opt = CRAPolicyOptimizer().fit(ROWS[:, :4])
    append = FunctionTransformer(lambda X: np.column_stack([X, opt.predict(X)]))
    pipe = make_pipeline(append, CRAMetrics())
    out = pipe.fit_transform(ROWS[:, :4])
    assert np.allclose(out[:, 0], opt.value_, atol=1e-12)
