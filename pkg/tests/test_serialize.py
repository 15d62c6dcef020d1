"""Model document round trips are bit-exact."""
import json

import numpy as np
import pytest

from conftest import heavy_tailed_series, random_kernel, random_triplet
from wismc.copulas import CopulaSpec
from wismc.errors import ParseError
from wismc.serialize import (
    dumps,
    kernel_from_dict,
    kernel_to_dict,
    load_model,
    save_model,
    triplet_from_dict,
    triplet_to_dict,
)
from wismc.triplet import TripletFitConfig, TripletKernel, fit_triplet_kernel


class TestKernelRoundTrip:
    def test_bit_exact(self):
        rng = np.random.default_rng(0)
        kernel = random_kernel(rng, sorted(rng.normal(0, 0.02, 4)), n_bins=3,
                               t_max=5)
        doc = json.loads(dumps(kernel_to_dict(kernel)))
        back = kernel_from_dict(doc)
        assert np.array_equal(back.grid.edges, kernel.grid.edges)
        assert np.array_equal(back.grid.representatives, kernel.grid.representatives)
        assert np.array_equal(back.index_edges, kernel.index_edges)
        assert np.array_equal(back.counts, kernel.counts)
        assert np.array_equal(back.pmf, kernel.pmf)
        assert back.lam == kernel.lam and back.t_max == kernel.t_max

    def test_infinite_edges_survive(self):
        rng = np.random.default_rng(1)
        kernel = random_kernel(rng, [-0.02, 0.01], n_bins=1, t_max=3)
        text = dumps(kernel_to_dict(kernel))
        assert "Infinity" in text
        back = kernel_from_dict(json.loads(text))
        assert np.isinf(back.grid.edges[0]) and np.isinf(back.grid.edges[-1])

    def test_format_tag_checked(self):
        with pytest.raises(ParseError):
            kernel_from_dict({"format": "something-else"})


class TestTripletRoundTrip:
    def test_bit_exact_fitted_model(self, tmp_path):
        r, v = heavy_tailed_series(8000, 2)
        tk = fit_triplet_kernel(r, v, TripletFitConfig(n_states_r=3, n_states_v=3,
                                                       n_index_bins=2))
        path = tmp_path / "model.json"
        save_model(tk, path)
        back = load_model(path)
        assert isinstance(back, TripletKernel)
        assert np.array_equal(back.kernel_j.pmf, tk.kernel_j.pmf)
        assert np.array_equal(back.kernel_v.counts, tk.kernel_v.counts)
        assert np.array_equal(back.cond_wait.pmf, tk.cond_wait.pmf)
        assert back.copula.family == tk.copula.family
        assert back.copula.rho == tk.copula.rho
        assert back.signs == tk.signs
        for a, b in zip(back.inverse_j.samples, tk.inverse_j.samples):
            assert np.array_equal(a, b)
        # serialization is idempotent byte-for-byte
        assert dumps(triplet_to_dict(back)) == dumps(triplet_to_dict(tk))

    def test_hand_built_round_trip(self):
        rng = np.random.default_rng(3)
        tk = random_triplet(rng, [-0.02, 0.01], [-1.0, 0.5],
                            CopulaSpec("gumbel", theta=2.5), t_max=3)
        back = triplet_from_dict(json.loads(dumps(triplet_to_dict(tk))))
        assert back.copula.theta == tk.copula.theta
        assert np.array_equal(back.cond_wait.x_edges, tk.cond_wait.x_edges)
        assert back.inverse_j is None

    def test_format_tag_checked(self):
        with pytest.raises(ParseError):
            triplet_from_dict({"format": "wismc.kernel"})

    def test_loader_dispatches_on_format(self, tmp_path):
        rng = np.random.default_rng(4)
        kernel = random_kernel(rng, [-0.02, 0.01], n_bins=1, t_max=3)
        p = tmp_path / "k.json"
        save_model(kernel, p)
        assert load_model(p).t_max == 3

    def test_evaluation_identical_after_round_trip(self):
        from wismc.triplet import ConditioningCell, triplet_kernel_eval
        rng = np.random.default_rng(5)
        tk = random_triplet(rng, [-0.02, 0.01, 0.03], [-1.0, 0.5],
                            CopulaSpec("gaussian", rho=0.45), t_max=3, max_b=3)
        back = triplet_from_dict(json.loads(dumps(triplet_to_dict(tk))))
        cell = ConditioningCell(i=1, v=0, b_j=1, b_v=0)
        for t in range(1, tk.t_max + 1):
            for j, a in [(0.015, 0.7), (-0.02, np.inf), (0.0, -0.5)]:
                assert triplet_kernel_eval(back, cell, j, a, t) == \
                    triplet_kernel_eval(tk, cell, j, a, t)
