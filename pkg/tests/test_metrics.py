import pytest

from taxqa.metrics import (
    EmptyInstanceSetError,
    InstanceResult,
    InstanceSet,
    MetricsError,
    UnresolvedParentError,
    conditional_accuracy,
    hierarchical_consistency,
    instance_set_from_results,
    judge_instance,
    metrics_report,
    overall_accuracy,
    pair_conditional_accuracy,
    per_depth_accuracy,
    per_hypernym_conditional,
)


@pytest.fixture()
def worked_example(result_factory):
    """Two originals, one and two substitutions: 0.8 / (2/3) / 0.5."""
    return instance_set_from_results(
        [
            result_factory("s|exist|a", ok=True),
            result_factory("s|exist|a@d1", ok=True, depth=1),
            result_factory("s|exist|b", ok=True),
            result_factory("s|exist|b@d1", ok=True, depth=1),
            result_factory("s|exist|b@d2", ok=False, depth=2),
        ]
    )


class TestJudging:
    def test_requires_positive_and_all_negatives(self, result_factory):
        assert judge_instance(result_factory("i", ok=True)) == 1
        assert judge_instance(result_factory("i", ok=False)) == 0
        one_neg_wrong = result_factory("i", ok=True, neg_ok=(True, True, False, True))
        assert judge_instance(one_neg_wrong) == 0
        pos_wrong = result_factory("i", ok=False, neg_ok=(True, True, True, True))
        assert judge_instance(pos_wrong) == 0

    def test_negative_judgment_arity_enforced(self):
        with pytest.raises(MetricsError):
            InstanceResult("i", True, (True, True, True))


class TestGrouping:
    def test_suffix_based_parent_resolution(self, result_factory):
        s = instance_set_from_results(
            [
                result_factory("s|exist|a", ok=True),
                result_factory("s|exist|a@d1", ok=True, depth=1),
                result_factory("s|exist|a@d2", ok=False, depth=2),
            ]
        )
        assert len(s.originals) == 1
        assert len(s.subs_of(s.originals[0])) == 2

    def test_explicit_parent_field_wins(self, result_factory):
        s = instance_set_from_results(
            [
                result_factory("orig", ok=True),
                result_factory("weird-id", ok=True, depth=1, parent="orig"),
            ]
        )
        assert len(s.originals) == 1
        assert [r.instance_id for r in s.subs_of(s.originals[0])] == ["weird-id"]

    def test_unresolvable_explicit_parent_raises(self, result_factory):
        with pytest.raises(UnresolvedParentError):
            instance_set_from_results(
                [result_factory("x", ok=True, depth=1, parent="missing")]
            )

    def test_membership_probe_is_its_own_original(self, result_factory):
        # depth > 0, no parent in the set, no explicit parent field
        s = instance_set_from_results(
            [result_factory("taxomps|dog|animal", ok=True, depth=1)]
        )
        assert len(s.originals) == 1
        assert s.substituted == {}

    def test_substituted_for_unknown_original_rejected_in_constructor(
        self, result_factory
    ):
        with pytest.raises(UnresolvedParentError):
            InstanceSet(
                originals=[result_factory("a")],
                substituted={"ghost": [result_factory("ghost@d1", depth=1)]},
            )


class TestAggregates:
    def test_worked_example(self, worked_example):
        assert overall_accuracy(worked_example) == pytest.approx(0.8, abs=1e-15)
        assert conditional_accuracy(worked_example) == pytest.approx(2 / 3, abs=1e-15)
        assert hierarchical_consistency(worked_example) == pytest.approx(0.5, abs=1e-15)

    def test_report_counts(self, worked_example):
        report = metrics_report(worked_example)
        assert report.n_originals == 2
        assert report.n_substituted == 3
        assert report.n_conditioned == 3
        d = report.to_dict()
        assert d["overall"] == report.overall
        assert d["conditional"] == report.conditional

    def test_perfect_model(self, result_factory):
        s = instance_set_from_results(
            [
                result_factory("a", ok=True),
                result_factory("a@d1", ok=True, depth=1),
                result_factory("b", ok=True),
            ]
        )
        assert overall_accuracy(s) == 1.0
        assert conditional_accuracy(s) == 1.0
        assert hierarchical_consistency(s) == 1.0

    def test_always_wrong_model(self, result_factory):
        s = instance_set_from_results(
            [
                result_factory("a", ok=False),
                result_factory("a@d1", ok=False, depth=1),
            ]
        )
        assert overall_accuracy(s) == 0.0
        # no correct original: the conditioning set is empty
        assert conditional_accuracy(s) is None
        assert hierarchical_consistency(s) == 0.0

    def test_conditional_none_without_substitutions(self, result_factory):
        s = instance_set_from_results([result_factory("a", ok=True)])
        assert conditional_accuracy(s) is None
        assert overall_accuracy(s) == 1.0
        assert hierarchical_consistency(s) == 1.0

    def test_incorrect_original_excluded_from_conditioning(self, result_factory):
        s = instance_set_from_results(
            [
                result_factory("a", ok=False),
                result_factory("a@d1", ok=True, depth=1),
                result_factory("b", ok=True),
                result_factory("b@d1", ok=False, depth=1),
            ]
        )
        # only b conditions; its single substitution is wrong
        assert conditional_accuracy(s) == 0.0
        assert hierarchical_consistency(s) == 0.0
        assert overall_accuracy(s) == 0.5

    def test_empty_set_raises(self):
        with pytest.raises(EmptyInstanceSetError):
            overall_accuracy(InstanceSet(originals=[]))
        with pytest.raises(EmptyInstanceSetError):
            hierarchical_consistency(InstanceSet(originals=[]))


class TestBreakdowns:
    def test_per_depth(self, worked_example):
        acc = per_depth_accuracy(worked_example)
        assert acc == {0: 1.0, 1: 1.0, 2: 0.0}

    def test_pair_conditional(self, result_factory):
        s = instance_set_from_results(
            [
                result_factory("a", ok=True),
                result_factory("a@d1", ok=True, depth=1, source_leaf="dog", target="canine"),
                result_factory("a@d2", ok=False, depth=2, source_leaf="dog", target="animal"),
                result_factory("b", ok=False),
                result_factory("b@d1", ok=True, depth=1, source_leaf="cat", target="feline"),
            ]
        )
        acc = pair_conditional_accuracy(s)
        # b's original failed, so (cat, feline) never conditions
        assert acc == {("dog", "canine"): 1.0, ("dog", "animal"): 0.0}

    def test_per_hypernym(self, result_factory):
        s = instance_set_from_results(
            [
                result_factory("a", ok=True),
                result_factory("a@d1", ok=True, depth=1, source_leaf="dog", target="animal"),
                result_factory("b", ok=True),
                result_factory("b@d1", ok=False, depth=1, source_leaf="cat", target="animal"),
            ]
        )
        assert per_hypernym_conditional(s) == {"animal": 0.5}
