import json

import numpy as np
import pytest

from lppm.metrics import PrivacySpec
from lppm.serialize import (dumps_canonical, load_mdp, load_result,
                            mdp_from_dict, mdp_to_dict, save_mdp, save_result)
from lppm.synthesis import (synthesize_asymptotic, synthesize_eps_private,
                            synthesize_unconstrained)
from support import random_dense_mdp


class TestDumpsCanonical:
    def test_key_order_is_insertion_order(self):
        s = dumps_canonical({"b": 1, "a": 2})
        assert s.index('"b"') < s.index('"a"')

    def test_repeat_calls_byte_identical(self):
        doc = {"x": [1 / 3, 2.0 ** -45], "y": {"z": [0.1, 0.2]}}
        assert dumps_canonical(doc) == dumps_canonical(doc)

    def test_negative_zero_normalized(self):
        assert dumps_canonical({"v": -0.0}) == dumps_canonical({"v": 0.0})
        assert "-0" not in dumps_canonical({"v": -0.0})

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            dumps_canonical({"v": float("inf")})
        with pytest.raises(ValueError):
            dumps_canonical({"v": float("nan")})

    def test_floats_round_trip_exactly(self):
        vals = [1 / 3, 1e-300, 123456.789, 2.0 ** -45]
        doc = json.loads(dumps_canonical({"v": vals}))
        assert doc["v"] == vals

    def test_valid_json(self):
        doc = {"a": [1, 2.5], "b": None, "c": "text", "d": True}
        assert json.loads(dumps_canonical(doc)) == doc


class TestMdpRoundTrip:
    def test_campus_bytes_stable(self, campus, tmp_path):
        p1, p2 = tmp_path / "m1.json", tmp_path / "m2.json"
        save_mdp(campus, p1)
        save_mdp(load_mdp(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_arrays_exact(self, campus, tmp_path):
        path = tmp_path / "m.json"
        save_mdp(campus, path)
        back = load_mdp(path)
        np.testing.assert_array_equal(back.transition, campus.transition)
        np.testing.assert_array_equal(back.utility, campus.utility)
        np.testing.assert_array_equal(back.p0, campus.p0)
        assert back.available == campus.available

    def test_meta_preserved(self, campus, tmp_path):
        path = tmp_path / "m.json"
        save_mdp(campus, path)
        back = load_mdp(path)
        assert back.state_meta is not None
        assert [m.label for m in back.state_meta] == \
            [m.label for m in campus.state_meta]
        assert back.state_meta[0].lat == campus.state_meta[0].lat
        assert back.action_meta[2].radius_m == campus.action_meta[2].radius_m

    def test_metaless_round_trip(self, rng, tmp_path):
        mdp = random_dense_mdp(rng)
        path = tmp_path / "m.json"
        save_mdp(mdp, path)
        back = load_mdp(path)
        assert back.state_meta is None
        assert back.action_meta is None
        np.testing.assert_array_equal(back.transition, mdp.transition)

    def test_dict_form_lists_only(self, campus):
        doc = mdp_to_dict(campus)
        assert doc["n_states"] == 6
        assert isinstance(doc["transition"], list)
        rebuilt = mdp_from_dict(json.loads(dumps_canonical(doc)))
        np.testing.assert_array_equal(rebuilt.transition, campus.transition)


class TestResultRoundTrip:
    def check(self, res, tmp_path):
        p1, p2 = tmp_path / "r1.json", tmp_path / "r2.json"
        save_result(res, p1)
        back = load_result(p1)
        save_result(back, p2)
        assert p1.read_bytes() == p2.read_bytes()
        return back

    def test_unconstrained_none_fields(self, campus, tmp_path):
        res = synthesize_unconstrained(campus)
        back = self.check(res, tmp_path)
        assert back.mode == "unconstrained"
        assert back.epsilon is None
        assert back.secret_states is None
        assert back.certificate is None
        assert back.b_inf is None
        np.testing.assert_array_equal(back.theta, res.theta)
        assert back.average_cost == res.average_cost

    def test_eps_private_certificate_survives(self, campus, tmp_path):
        res = synthesize_eps_private(campus, PrivacySpec((3,), 0.17))
        back = self.check(res, tmp_path)
        assert back.epsilon == 0.17
        assert back.secret_states == (3,)
        assert back.certificate is not None
        assert back.certificate.z == res.certificate.z
        np.testing.assert_array_equal(back.certificate.beta,
                                      res.certificate.beta)

    def test_asymptotic_limit_belief_survives(self, campus, tmp_path):
        res = synthesize_asymptotic(campus, PrivacySpec((3,), 0.16),
                                    n_starts=4)
        back = self.check(res, tmp_path)
        assert back.b_inf is not None
        np.testing.assert_array_equal(back.b_inf, res.b_inf)
        assert back.diagnostics["residual"] == res.diagnostics["residual"]
