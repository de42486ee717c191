import numpy as np
import pytest

from eig_mlmc import (
    BayesModel,
    ForwardMap,
    GaussianDensity,
    LinearGaussianSpec,
    make_linear_model,
)

# Closed-form expected information gains for the reference linear case.
U_LINEAR_NE1 = 4.4574
U_LINEAR_NE10 = 6.6642


@pytest.fixture(scope="session")
def linear_spec():
    return LinearGaussianSpec()


@pytest.fixture(scope="session")
def linear_model(linear_spec):
    return make_linear_model(linear_spec)


@pytest.fixture(scope="session")
def oned_spec():
    return LinearGaussianSpec(
        A=[[1.0]], mu_theta=[0.0], Sigma_theta=[[1.0]], Sigma_eps=[[1.0]]
    )


@pytest.fixture(scope="session")
def oned_model(oned_spec):
    return make_linear_model(oned_spec)


def constant_model(value=(1.0, -2.0), noise_var=0.5, dim=2):
    """Model whose forward map ignores theta entirely."""
    w = len(value)
    c = np.asarray(value, dtype=float)

    def fwd(theta):
        return np.broadcast_to(c, theta.shape[:-1] + (w,)).copy()

    def jac(theta):
        return np.zeros(theta.shape[:-1] + (w, dim))

    def hess(theta):
        return np.zeros(theta.shape[:-1] + (w, dim, dim))

    return BayesModel(
        prior=GaussianDensity(np.zeros(dim), np.eye(dim)),
        forward=ForwardMap(fn=fwd, out_dim=w, jac=jac, hess=hess),
        noise=GaussianDensity(np.zeros(w), noise_var * np.eye(w)),
    )


@pytest.fixture(scope="session")
def const_model():
    return constant_model()


def point_mass_model():
    """Linear model with an effectively degenerate prior."""
    return make_linear_model(
        LinearGaussianSpec(
            A=[[1.0, 0.0], [0.0, 1.0]],
            mu_theta=[0.5, -0.25],
            Sigma_theta=1e-30 * np.eye(2),
            Sigma_eps=0.5 * np.eye(2),
        )
    )
