import itertools
import random

import pytest

from patvar.filtering import (
    DiscriminatorVerdict,
    FilterConfig,
    FilterDeps,
    MetricFlags,
    QualityReport,
    audit_record,
    compute_metrics,
    discriminator_filter,
    heuristic_filter,
    run_pipeline,
    symbolic_filter,
)
from patvar.gateway import CompletionResponse, Gateway, MockBackend
from patvar.generation import CounterfactualCandidate, GenerationTask, ResponseFormatError
from patvar.patterns import parse_pattern


def make_candidate(provider, text, *, original="The staff was rude.", pattern="(cheap)+*+NOUN",
                   original_label="service", target_label="price", uid="c0",
                   finish_reason="stop", used_phrase=None):
    task = GenerationTask(
        provider.annotate(original),
        original_label,
        target_label,
        parse_pattern(pattern) if pattern else None,
        "affordable lobster" if pattern else "",
    )
    return CounterfactualCandidate(
        uid=uid, task=task, generated_text=text, used_phrase=used_phrase,
        finish_reason=finish_reason,
    )


LABELS = ["service", "price", "environment", "products"]


def label_gateway(label_vocab=None):
    backend = MockBackend(label_vocab=label_vocab or {
        "price": ["affordable", "cheap", "lobster", "deal"],
        "service": ["staff", "rude", "friendly"],
        "environment": ["cozy", "decor"],
        "products": ["food", "tasty"],
    })
    return Gateway(backend=backend, model="mock-model"), backend


# ---------------------------------------------------------------------------
# Heuristic stage
# ---------------------------------------------------------------------------


def test_heuristic_rejects_refusal(provider):
    v = heuristic_filter(make_candidate(provider, "cannot generate counterfactual"))
    assert (v.status, v.reason) == ("failed", "refusal")


def test_heuristic_rejects_prompt_echo(provider):
    v = heuristic_filter(make_candidate(provider, "modified text: The affordable lobster is great."))
    assert v.status == "failed"
    assert "prompt echo" in v.reason


def test_heuristic_rejects_truncation(provider):
    v = heuristic_filter(make_candidate(provider, "The affordable lobster here is", finish_reason="length"))
    assert v.status == "failed"
    assert "incomplete" in v.reason
    v2 = heuristic_filter(make_candidate(provider, "The affordable lobster here is"))
    assert v2.status == "failed"
    assert "punctuation" in v2.reason


def test_heuristic_rejects_trivial(provider):
    assert heuristic_filter(make_candidate(provider, "so cheap")).status == "failed"
    identical = make_candidate(provider, "The staff was rude.")
    assert "identical" in heuristic_filter(identical).reason


def test_heuristic_passes_clean_text(provider):
    v = heuristic_filter(make_candidate(provider, "The affordable lobster here is a steal."))
    assert v.status == "passed"


def test_heuristic_accepts_quoted_terminal(provider):
    v = heuristic_filter(make_candidate(provider, 'They said "what a nice affordable deal!"'))
    assert v.status == "passed"


# ---------------------------------------------------------------------------
# Symbolic stage
# ---------------------------------------------------------------------------


def test_symbolic_pass_and_fail(provider, lexicon):
    good = make_candidate(provider, "The affordable lobster here is a steal.")
    assert symbolic_filter(good, lexicon, provider).status == "passed"
    bad = make_candidate(provider, "Service was slow today, sadly so.")
    v = symbolic_filter(bad, lexicon, provider)
    assert v.status == "failed"
    assert "(cheap)+*+NOUN" in v.reason


def test_symbolic_vacuous_pattern_warns(provider, lexicon, caplog):
    cand = make_candidate(provider, "anything at all goes here.", pattern="*")
    with caplog.at_level("WARNING"):
        v = symbolic_filter(cand, lexicon, provider)
    assert v.status == "passed"
    assert any("vacuous" in r.message for r in caplog.records)


def test_symbolic_skips_unconstrained(provider, lexicon):
    cand = make_candidate(provider, "Some rewrite without a pattern.", pattern=None)
    v = symbolic_filter(cand, lexicon, provider)
    assert v.status == "skipped"


# ---------------------------------------------------------------------------
# Discriminator stage
# ---------------------------------------------------------------------------


def test_discriminator_hits_target(provider):
    gw, _ = label_gateway()
    cand = make_candidate(provider, "The affordable lobster deal is unbeatable.")
    v, dv = discriminator_filter(cand, LABELS, gw)
    assert v.status == "passed"
    assert dv == DiscriminatorVerdict("price", "price", "service")


def test_discriminator_kept_original(provider):
    gw, _ = label_gateway()
    cand = make_candidate(provider, "The affordable staff was rude here.")
    v, dv = discriminator_filter(cand, LABELS, gw)
    assert v.status == "failed"
    assert "kept original" in v.reason
    assert dv.predicted == "service"


def test_discriminator_missed_target_is_soft_flip(provider):
    gw, _ = label_gateway()
    cand = make_candidate(provider, "The tasty food impressed everyone.")
    v, dv = discriminator_filter(cand, LABELS, gw)
    assert v.status == "failed"
    assert dv.predicted == "products"
    assert dv.predicted != dv.original


def test_discriminator_format_error(provider):
    backend = MockBackend(template_mode=False)
    gw = Gateway(backend=backend, model="m")
    cand = make_candidate(provider, "whatever text.")
    from patvar.filtering import fill, load_template  # build the exact request the filter sends

    messages = fill(load_template("discriminator"), {"text": cand.generated_text, "labels": ", ".join(LABELS)})
    backend.add_response(tuple(messages), "not-a-label")
    with pytest.raises(ResponseFormatError):
        discriminator_filter(cand, LABELS, gw)


# ---------------------------------------------------------------------------
# compute_metrics
# ---------------------------------------------------------------------------


def test_compute_metrics_all_perfect():
    flags = [MetricFlags(True, DiscriminatorVerdict("b", "b", "a")) for _ in range(5)]
    report = compute_metrics(flags)
    assert (report.pkr, report.slfr, report.lfr) == (1.0, 1.0, 1.0)


def test_compute_metrics_hand_counts():
    # predicted/target/original triples (A,B,A),(B,B,A),(C,B,A):
    # hits-target = 1 -> lfr 1/3; left-original = 2 -> slfr 2/3
    flags = [
        MetricFlags(None, DiscriminatorVerdict("A", "B", "A")),
        MetricFlags(None, DiscriminatorVerdict("B", "B", "A")),
        MetricFlags(None, DiscriminatorVerdict("C", "B", "A")),
    ]
    report = compute_metrics(flags)
    assert report.lfr == pytest.approx(0.3333, abs=1e-4)
    assert report.slfr == pytest.approx(0.6667, abs=1e-4)
    assert report.pkr is None


def test_compute_metrics_empty():
    report = compute_metrics([])
    assert report.n == 0
    assert report.pkr is None and report.slfr is None and report.lfr is None


def test_compute_metrics_permutation_invariant():
    rng = random.Random(4)
    labels = ["a", "b", "c"]
    flags = [
        MetricFlags(rng.random() < 0.5,
                    DiscriminatorVerdict(rng.choice(labels), "b", "a"))
        for _ in range(40)
    ]
    shuffled = flags[:]
    rng.shuffle(shuffled)
    assert compute_metrics(flags) == compute_metrics(shuffled)


def test_lfr_never_exceeds_slfr_when_labels_differ():
    rng = random.Random(99)
    labels = ["a", "b", "c", "d"]
    for _ in range(1000):
        n = rng.randint(1, 12)
        flags = []
        for _ in range(n):
            original, target = rng.sample(labels, 2)
            flags.append(MetricFlags(None, DiscriminatorVerdict(rng.choice(labels), target, original)))
        report = compute_metrics(flags)
        assert report.lfr <= report.slfr


# ---------------------------------------------------------------------------
# run_pipeline
# ---------------------------------------------------------------------------


def batch(provider):
    return [
        make_candidate(provider, "The affordable lobster deal is unbeatable.", uid="keep"),
        make_candidate(provider, "cannot generate counterfactual", uid="refused"),
        make_candidate(provider, "Service was slow and boring today.", uid="pattern-lost"),
        make_candidate(provider, "The affordable staff was rude here.", uid="kept-label"),
    ]


def deps_for(provider, lexicon, audit=None):
    gw, backend = label_gateway()
    return FilterDeps(lex=lexicon, provider=provider, gateway=gw, label_set=LABELS, audit_sink=audit), backend


def test_run_pipeline_full(provider, lexicon):
    deps, _ = deps_for(provider, lexicon)
    survivors, report = run_pipeline(batch(provider), FilterConfig(), deps)
    assert [c.uid for c in survivors] == ["keep"]
    assert report.n == 4
    # refused candidate never reached the symbolic or discriminator stage
    assert report.pattern_n == 3
    assert report.pkr == pytest.approx(2 / 3)
    assert report.label_n == 2
    assert report.lfr == pytest.approx(1 / 2)
    assert report.slfr == pytest.approx(1 / 2)


def test_run_pipeline_all_disabled_is_identity(provider, lexicon):
    deps, _ = deps_for(provider, lexicon)
    cands = batch(provider)
    survivors, report = run_pipeline(cands, FilterConfig(False, False, False), deps)
    assert [c.uid for c in survivors] == [c.uid for c in cands]
    assert report.n == 4
    assert report.pkr is None and report.lfr is None and report.slfr is None


def test_run_pipeline_pkr_formula(provider, lexicon):
    deps, _ = deps_for(provider, lexicon)
    cands = [
        make_candidate(provider, "The affordable lobster deal is unbeatable.", uid="a"),
        make_candidate(provider, "Another affordable menu item appears today.", uid="b"),
        make_candidate(provider, "A cheap deal arrived this morning.", uid="c"),
        make_candidate(provider, "Nothing relevant happened here today sadly.", uid="d"),
    ]
    _, report = run_pipeline(cands, FilterConfig(True, True, False), deps)
    assert report.pattern_n == 4
    assert report.pkr == pytest.approx(0.75)
    assert report.label_n == 0


def test_run_pipeline_novt_bypasses_symbolic_and_pkr(provider, lexicon):
    deps, _ = deps_for(provider, lexicon)
    cand = make_candidate(provider, "The affordable lobster deal is unbeatable.", pattern=None, uid="novt")
    survivors, report = run_pipeline([cand], FilterConfig(), deps)
    assert [c.uid for c in survivors] == ["novt"]
    assert survivors[0].verdicts["symbolic"].status == "skipped"
    assert report.pattern_n == 0 and report.pkr is None
    assert report.label_n == 1


def test_run_pipeline_audit_log(provider, lexicon):
    records = []
    deps, _ = deps_for(provider, lexicon, audit=records.append)
    run_pipeline(batch(provider), FilterConfig(), deps)
    assert len(records) == 4
    by_uid = {r["uid"]: r for r in records}
    assert by_uid["refused"]["verdicts"]["heuristic"]["reason"] == "refusal"
    assert by_uid["keep"]["discriminator_label"] == "price"
    assert by_uid["pattern-lost"]["verdicts"]["discriminator"]["status"] == "pending"


def test_run_pipeline_discriminator_error_fails_candidate(provider, lexicon):
    backend = MockBackend(template_mode=False)  # no canned responses: every call errors
    gw = Gateway(backend=backend, model="m")
    deps = FilterDeps(lex=lexicon, provider=provider, gateway=gw, label_set=LABELS)
    cands = [make_candidate(provider, "The affordable lobster deal is unbeatable.", uid="x")]
    survivors, report = run_pipeline(cands, FilterConfig(), deps)
    assert survivors == []
    assert report.label_n == 0


def test_stage_monotonicity_on_fixed_batch(provider, lexicon):
    deps, _ = deps_for(provider, lexicon)
    cands = batch(provider)
    nested = [
        FilterConfig(False, False, False),
        FilterConfig(True, False, False),
        FilterConfig(True, True, False),
        FilterConfig(True, True, True),
    ]
    survivor_sets = []
    for cfg in nested:
        survivors, _ = run_pipeline(cands, cfg, deps)
        survivor_sets.append({c.uid for c in survivors})
    for bigger, smaller in zip(survivor_sets, survivor_sets[1:]):
        assert smaller <= bigger


def test_filter_config_arms():
    assert set(FilterConfig.ARMS) == {"none", "heuristic", "heuristic+symbolic",
                                      "heuristic+discriminator", "all"}
    assert FilterConfig.from_arm("heuristic+symbolic") == FilterConfig(True, True, False)
    with pytest.raises(ValueError):
        FilterConfig.from_arm("bogus")


def test_audit_record_shape(provider):
    cand = make_candidate(provider, "The affordable lobster deal is unbeatable.")
    rec = audit_record(cand)
    assert rec["pattern"] == "(cheap)+*+NOUN"
    assert set(rec["verdicts"]) == {"heuristic", "symbolic", "discriminator"}
