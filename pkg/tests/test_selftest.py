import numpy as np

from metaseq import selftest
from metaseq.generators import default_coin_set


class TestSelftest:
    def test_pristine_passes(self):
        results = selftest.run_selftest()
        assert [r.name for r in results if not r.passed] == []
        assert len(results) == 7

    def test_skipped_renormalization_trips_martingale(self):
        res = selftest.check_martingale(selftest.unnormalized_update)
        assert not res.passed
        assert res.witness == ()
        assert "martingale" in res.line() and "witness" in res.line()

    def test_exact_update_matches_bayes(self):
        w = selftest.exact_update(np.array([0.5, 0.5]), default_coin_set(), (), 1)
        np.testing.assert_allclose(w, [0.3, 0.7])

    def test_fault_reported_not_raised(self):
        results = selftest.run_selftest(selftest.unnormalized_update)
        failed = {r.name for r in results if not r.passed}
        assert {"normalization", "martingale"} <= failed
