import pytest

from ekd.lm import BOS, EOS, UNK, load_arpa, perplexity, save_arpa, train_lm

CORPUS = [
    ["ab", "ba", "ab"],
    ["ba", "aba"],
    ["ab"],
    ["aba", "ab", "ba"],
    ["bab", "ab"],
    ["ba", "bab"],
]


@pytest.fixture(params=[1, 2, 3])
def lm(request):
    return train_lm(CORPUS, order=request.param)


def test_unigram_counting_single_transcript():
    lm1 = train_lm([["a", "b"]], order=1)
    pa = 10 ** lm1.log10_prob("a")
    pb = 10 ** lm1.log10_prob("b")
    pe = 10 ** lm1.log10_prob(EOS)
    assert pa == pytest.approx(pb) == pytest.approx(pe)  # counts are all one
    total = pa + pb + pe + 10 ** lm1.log10_prob("zzz")
    assert total == pytest.approx(1.0, abs=1e-9)


def test_context_distributions_normalize(lm):
    events = sorted(lm.vocabulary)
    contexts = [(), ("ab",), ("ba", "ab"), ("never-seen",), (BOS,), (BOS, BOS),
                ("ab", "never-seen"), ("aba", "bab")]
    for ctx in contexts:
        total = sum(10 ** lm.log10_prob(w, ctx) for w in events)
        assert total == pytest.approx(1.0, abs=1e-6), f"context {ctx}"


def test_unseen_words_get_unknown_mass(lm):
    assert lm.log10_prob("zzz") == lm.log10_prob(UNK)
    assert 10 ** lm.log10_prob("zzz") > 0


def test_training_text_preferred_over_held_out():
    train_half = CORPUS[:4]
    held_out = [["xq" if False else "qx"], ["zz", "yy"], ["ba", "qx", "zz"]]
    model = train_lm(train_half, order=2)
    assert perplexity(model, train_half) <= perplexity(model, held_out)


def test_two_domain_perplexity_split():
    domain_a = [["ab", "ba"], ["ab", "aba"], ["ba", "bab"], ["ab"]]
    domain_b = [["qq", "rr"], ["rr", "ss"], ["qq"]]
    model = train_lm(domain_a, order=2)
    assert perplexity(model, domain_a) <= perplexity(model, domain_b)


def test_order_validation():
    with pytest.raises(ValueError, match="order"):
        train_lm(CORPUS, order=0)
    with pytest.raises(ValueError, match="non-empty"):
        train_lm([], order=2)


def test_deterministic():
    a = train_lm(CORPUS, order=3)
    b = train_lm(CORPUS, order=3)
    assert a.log_probs == b.log_probs and a.backoffs == b.backoffs


def test_sentence_score_uses_history():
    model = train_lm(CORPUS, order=2)
    # p(ab | <s>) should differ from the unigram p(ab)
    assert model.log10_prob("ab", (BOS,)) != model.log10_prob("ab")


def test_arpa_round_trip(tmp_path, lm):
    path = tmp_path / "model.arpa"
    save_arpa(lm, path)
    loaded = load_arpa(path)
    assert loaded.order == lm.order
    assert loaded.log_probs == lm.log_probs
    assert loaded.backoffs == lm.backoffs
    assert loaded.vocabulary == lm.vocabulary
    assert loaded.ngram_counts == lm.ngram_counts


def test_arpa_layout(tmp_path):
    model = train_lm(CORPUS, order=2)
    path = tmp_path / "model.arpa"
    save_arpa(model, path)
    text = path.read_text()
    assert text.startswith("\\data\\\n")
    assert "\\1-grams:" in text and "\\2-grams:" in text
    assert text.rstrip().endswith("\\end\\")
    header_counts = [int(line.split("=")[1]) for line in text.splitlines()
                     if line.startswith("ngram")]
    assert tuple(header_counts) == model.ngram_counts


def test_arpa_queries_survive_round_trip(tmp_path):
    model = train_lm(CORPUS, order=3)
    path = tmp_path / "model.arpa"
    save_arpa(model, path)
    loaded = load_arpa(path)
    for ctx in [(), ("ab",), ("ba", "ab"), ("zz",)]:
        for w in ["ab", "ba", "zz", EOS]:
            assert loaded.log10_prob(w, ctx) == model.log10_prob(w, ctx)


def test_perplexity_requires_tokens():
    model = train_lm(CORPUS, order=2)
    with pytest.raises(ValueError):
        perplexity(model, [])
