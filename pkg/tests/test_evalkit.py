import itertools
import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import ent, para
from kpi_forge.evalkit import (
    PredictedEntity,
    Scorer,
    _WEIGHTS,
    align,
    cumulative_macro_f1,
    entity_exact_match,
    evaluate,
    gold_fields,
    label_macro_f1,
    parse_prediction,
    pred_fields,
    score_field,
)


def pred_of(e, **override):
    rec = {
        "label": e.label,
        "start_date_for_period": e.period_start.isoformat(),
        "end_date_for_period": e.period_end.isoformat(),
        "currency_/_unit": e.unit,
        "value": float(e.value),
    }
    rec.update(override)
    return PredictedEntity.from_record(rec)


GOLD3 = [ent("revenues", value="100"), ent("earnings", value="200"), ent("eps", value="1.5", unit="USD/shares")]


def test_identical_lists_identity_pairing():
    a = align(GOLD3, [pred_of(g) for g in GOLD3])
    assert a.pairs == [(0, 0), (1, 1), (2, 2)]
    assert a.unmatched_gold == a.unmatched_pred == []


def test_value_match_picks_second_gold():
    gold = [ent("revenues", value="5", unit="EUR", period=("2020-01-01", "2020-12-31")),
            ent("earnings", value="7")]
    pred = [PredictedEntity(value=pred_of(gold[1]).value)]
    a = align(gold, pred)
    assert a.pairs == [(1, 0)] and a.unmatched_gold == [0] and a.unmatched_pred == []


def test_empty_pred():
    a = align(GOLD3, [])
    assert a.pairs == [] and a.unmatched_gold == [0, 1, 2]
    assert score_field(GOLD3, [], "value") == (0.0, 0.0, 0.0)


def test_one_label_error_gives_two_thirds():
    pred = [pred_of(GOLD3[0]), pred_of(GOLD3[1]), pred_of(GOLD3[2], label="revenues")]
    p, r, f = score_field(GOLD3, pred, "label")
    assert (p, r) == (2 / 3, 2 / 3)
    assert f == pytest.approx(2 / 3, abs=1e-15)
    assert score_field(GOLD3, pred, "value") == (1.0, 1.0, 1.0)


def test_pure_misclassification():
    assert score_field([ent("revenues")], [pred_of(ent("revenues"), label="earnings")], "label") == (0.0, 0.0, 0.0)


def test_macro_f1_cases():
    gold = [ent("revenues")]
    assert label_macro_f1(gold, [pred_of(gold[0])]) == 1.0
    two = [ent("revenues", value="1"), ent("earnings", value="2")]
    assert label_macro_f1(two, [pred_of(two[0])]) == 0.5
    # a predicted-only label is not averaged in
    extra = [pred_of(two[0]), pred_of(two[1]), PredictedEntity(label="ebit", value=None)]
    s = Scorer().add(two, extra)
    assert "ebit" in s.labels and s.labels["ebit"].fp == 1
    assert s.label_macro_f1() == 1.0


def test_cumulative_curve():
    assert cumulative_macro_f1({"a": 1.0, "b": 0.0}, {"a": 10, "b": 5}) == [(10, 1.0), (15, 0.5)]
    assert cumulative_macro_f1({"a": 0.25}, {"a": 3}) == [(3, 0.25)]
    assert cumulative_macro_f1({"b": 1.0, "a": 0.0}, {"a": 4, "b": 4}) == [(4, 0.0), (8, 0.5)]
    with pytest.raises(ValueError):
        cumulative_macro_f1({"a": 1.0}, {})


def test_exact_match():
    perfect = [pred_of(g) for g in GOLD3]
    assert entity_exact_match(GOLD3, perfect) == 1.0
    off = [pred_of(g, **{"currency_/_unit": "JPY"}) for g in GOLD3]
    assert entity_exact_match(GOLD3, off) == 0.0
    assert entity_exact_match([], []) == 0.0


def test_missing_field_is_false_negative_only():
    pred = [pred_of(GOLD3[0], **{"currency_/_unit": None})]
    s = Scorer().add(GOLD3[:1], pred)
    assert (s.fields["currency"].fn, s.fields["currency"].fp) == (1, 0)


def test_value_equality_is_exact_decimal():
    g = [ent("revenues", value="3300000000")]
    assert score_field(g, [pred_of(g[0], value=3.3e9)], "value")[2] == 1.0
    assert score_field(g, [pred_of(g[0], value="3,300,000,000")], "value")[2] == 1.0
    assert score_field(g, [pred_of(g[0], value=3300000000.5)], "value")[2] == 0.0


def test_wrong_date_format_scores_zero():
    g = [ent("revenues")]
    assert score_field(g, [pred_of(g[0], start_date_for_period="01/01/2023")], "start_date")[2] == 0.0


def test_evaluate_and_parse_forms():
    gold = [para(["revenues"]), para(["earnings", "eps"])]
    preds = [
        {"entities": [{"label": "revenues", "start_date_for_period": "2023-01-01",
                       "end_date_for_period": "2023-12-31", "currency_/_unit": "USD", "value": 1}]},
        [{"label": "earnings", "start_date_for_period": "2023-01-01", "end_date_for_period": "2023-12-31",
          "currency_/_unit": "USD", "value": "1"}],
    ]
    s = evaluate(gold, preds)
    assert s.gold_total == 3 and s.exact == 2
    rep = s.report()
    assert rep["entity_exact_match"] == 2 / 3
    json.dumps(rep)
    with pytest.raises(ValueError):
        evaluate(gold, preds[:1])
    with pytest.raises(ValueError):
        parse_prediction("nope")


def test_scorer_merge_is_additive():
    a = Scorer().add(GOLD3, [pred_of(GOLD3[0])])
    b = Scorer().add(GOLD3[:2], [pred_of(GOLD3[1], label="x")])
    both = Scorer().add(GOLD3, [pred_of(GOLD3[0])]).add(GOLD3[:2], [pred_of(GOLD3[1], label="x")])
    assert (a + b).report() == both.report()


# -- properties --------------------------------------------------------------

LABELS = ["revenues", "earnings", "eps", "ebit"]
VALUES = ["1", "2", "3.5", "100"]
PERIODS = [("2023-01-01", "2023-12-31"), ("2022-01-01", "2022-12-31"), ("2023-12-31", "2023-12-31")]
UNITS = ["USD", "EUR"]

gold_st = st.builds(lambda l, v, p, u: ent(l, value=v, period=p, unit=u),
                    st.sampled_from(LABELS), st.sampled_from(VALUES), st.sampled_from(PERIODS), st.sampled_from(UNITS))
pred_st = st.builds(
    lambda l, v, p, u: PredictedEntity(l, p[0], p[1], u, None if v is None else pred_of(ent("x", value=v)).value),
    st.one_of(st.none(), st.sampled_from(LABELS)), st.one_of(st.none(), st.sampled_from(VALUES)),
    st.sampled_from(PERIODS), st.sampled_from(UNITS),
)


def _score(gf, pf):
    return sum(w for f, w in _WEIGHTS.items() if pf[f] is not None and gf[f] == pf[f])


def optimal_total(gold, pred):
    """Best total agreement over every one-to-one matching of maximal size."""
    gf = [gold_fields(g) for g in gold]
    pf = [pred_fields(p) for p in pred]
    k = min(len(gf), len(pf))
    return max(
        (sum(_score(gf[i], pf[j]) for i, j in zip(gi, pj))
         for gi in itertools.combinations(range(len(gf)), k)
         for pj in itertools.permutations(range(len(pf)), k)),
        default=0,
    )


@settings(max_examples=150, deadline=None)
@given(st.lists(gold_st, max_size=6), st.lists(pred_st, max_size=6), st.randoms(use_true_random=False))
def test_permutation_invariance_and_bounds(gold, pred, rnd):
    base = Scorer().add(gold, pred).report()
    g2, p2 = list(gold), list(pred)
    rnd.shuffle(g2)
    rnd.shuffle(p2)
    assert Scorer().add(g2, p2).report() == base
    for f, vals in base["per_field"].items():
        assert all(0.0 <= v <= 1.0 for v in vals.values())
        c = base["counts"]["fields"][f]
        assert c["tp"] + c["fn"] == len(gold)
    assert 0.0 <= base["entity_exact_match"] <= 1.0


@settings(max_examples=150, deadline=None)
@given(st.lists(gold_st, max_size=6), st.lists(pred_st, max_size=6))
def test_greedy_against_exhaustive(gold, pred):
    a = align(gold, pred)
    gf = [gold_fields(g) for g in gold]
    pf = [pred_fields(p) for p in pred]
    greedy = sum(_score(gf[i], pf[j]) for i, j in a.pairs)
    best = optimal_total(gold, pred)
    assert greedy <= best
    assert 2 * greedy >= best  # greedy weighted matching is a 1/2-approximation


def test_report_greedy_divergence(capsys):
    rng = random.Random(3)
    worse = total = 0
    for _ in range(300):
        gold = [ent(rng.choice(LABELS), value=rng.choice(VALUES), period=rng.choice(PERIODS), unit=rng.choice(UNITS))
                for _ in range(rng.randint(0, 6))]
        pred = [pred_of(ent(rng.choice(LABELS), value=rng.choice(VALUES), period=rng.choice(PERIODS),
                            unit=rng.choice(UNITS))) for _ in range(rng.randint(0, 6))]
        a = align(gold, pred)
        gf = [gold_fields(g) for g in gold]
        pf = [pred_fields(p) for p in pred]
        greedy = sum(_score(gf[i], pf[j]) for i, j in a.pairs)
        total += 1
        worse += greedy < optimal_total(gold, pred)
    with capsys.disabled():
        print(f"\ngreedy alignment below exhaustive optimum on {worse}/{total} random instances")
    assert worse <= total
