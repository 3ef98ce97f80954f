import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from relaxnls import RelaxationCNGalerkin
from relaxnls.experiments import soliton


def test_fit_predict():
    est = RelaxationCNGalerkin(M=600, degree=2)
    assert est.get_params()["M"] == 600
    with pytest.raises(NotFittedError):
        est.predict([0.0])
    est.fit(lambda x: soliton(x, 0.0), u_exact=soliton)
    x = np.linspace(-5, 5, 41)
    err = np.abs(est.predict(x) - soliton(x, 1.0)).max()
    assert err < 1e-3
    assert est.predict(x.reshape(41, 1)).shape == (41, 1)
    assert est.error_bound() >= est.result_.E_exact
    assert est.report_.EN_total > 0


def test_clone_and_params():
    est = RelaxationCNGalerkin(M=300, convention="table", n_steps=5)
    c = clone(est)
    assert c.get_params() == est.get_params()
    c.set_params(M=120).fit(lambda x: soliton(x, 0.0))
    assert c.result_.grid.N == 5 and c.space_.num_elements == 120
