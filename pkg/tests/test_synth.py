import numpy as np
import pytest

from stancekit.corpus import write_tweets_jsonl
from stancekit.synth import CountSpec, SynthParams, generate, gold_labels


def base_params(**overrides):
    defaults = dict(n_users_per_side=30, n_accounts_per_side=20, polarization=0.9,
                    tweets_per_user=CountSpec(3, 6), text_vocab_per_side=50, seed=0)
    defaults.update(overrides)
    return SynthParams(**defaults)


def all_tweets(corpus, timeline=False):
    for record in corpus.users.values():
        yield from (record.timeline_tweets if timeline else record.topical_tweets)


# ---------------------------------------------------------------- determinism

def test_generation_is_deterministic(tmp_path):
    corpus_a, sides_a = generate(base_params())
    corpus_b, sides_b = generate(base_params())
    assert corpus_a == corpus_b
    assert sides_a == sides_b
    first, second = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_tweets_jsonl(list(all_tweets(corpus_a)), first)
    write_tweets_jsonl(list(all_tweets(corpus_b)), second)
    assert first.read_bytes() == second.read_bytes()


def test_seed_changes_output():
    corpus_a, _ = generate(base_params(seed=1))
    corpus_b, _ = generate(base_params(seed=2))
    assert corpus_a != corpus_b


# ---------------------------------------------------------------- structure

def test_gold_labels_partition_in_half_interleaved():
    corpus, account_sides = generate(base_params())
    gold = gold_labels(corpus)
    assert len(gold) == 60
    assert sum(gold.values()) == 30
    assert gold["u00000"] == 0 and gold["u00001"] == 1
    assert len(account_sides) == 40
    assert sum(account_sides.values()) == 20
    for record in corpus.users.values():
        assert record.gold_label == gold[record.user_id]


def test_tweet_counts_respect_spec():
    corpus, _ = generate(base_params(tweets_per_user=CountSpec(2, 4)))
    counts = [len(r.topical_tweets) for r in corpus.users.values()]
    assert min(counts) >= 2 and max(counts) <= 4
    assert all(not r.timeline_tweets for r in corpus.users.values())


def test_timeline_counts_and_id_prefixes():
    corpus, _ = generate(base_params(timeline_tweets_per_user=CountSpec(5, 5)))
    for record in corpus.users.values():
        assert len(record.timeline_tweets) == 5
        assert all(t.id.startswith("g") for t in record.timeline_tweets)
        assert all(t.id.startswith("t") for t in record.topical_tweets)


def test_zipf_counts_skew_low():
    params = base_params(n_users_per_side=400, tweets_per_user=CountSpec(1, 10, "zipf"))
    corpus, _ = generate(params)
    counts = [len(r.topical_tweets) for r in corpus.users.values()]
    ones = sum(1 for c in counts if c == 1)
    tens = sum(1 for c in counts if c == 10)
    assert ones > 3 * tens
    assert np.mean(counts) < 5.0


# ---------------------------------------------------------------- polarization

def test_full_polarization_never_crosses_sides():
    corpus, account_sides = generate(base_params(polarization=1.0))
    gold = gold_labels(corpus)
    for tweet in all_tweets(corpus):
        assert tweet.retweeted_user is not None
        assert account_sides[tweet.retweeted_user] == gold[tweet.user_id]


def test_half_polarization_crosses_half_the_time():
    params = base_params(n_users_per_side=500, polarization=0.5,
                         tweets_per_user=CountSpec(10, 10), seed=3)
    corpus, account_sides = generate(params)
    gold = gold_labels(corpus)
    total = cross = 0
    for tweet in all_tweets(corpus):
        total += 1
        cross += account_sides[tweet.retweeted_user] != gold[tweet.user_id]
    assert total == 10000
    assert abs(cross / total - 0.5) < 0.02


def test_polarization_sets_own_side_fraction():
    params = base_params(n_users_per_side=500, polarization=0.9,
                         tweets_per_user=CountSpec(10, 10), seed=4)
    corpus, account_sides = generate(params)
    gold = gold_labels(corpus)
    own = sum(account_sides[t.retweeted_user] == gold[t.user_id]
              for t in all_tweets(corpus))
    assert abs(own / 10000 - 0.9) < 0.02


# ---------------------------------------------------------------- knobs

def test_zero_retweet_probability_makes_original_posts():
    params = base_params(retweet_probability=0.0,
                         timeline_tweets_per_user=CountSpec(3, 3),
                         timeline_retweet_probability=1.0)
    corpus, _ = generate(params)
    for tweet in all_tweets(corpus):
        assert tweet.retweeted_user is None
        assert not tweet.text.startswith("RT @")
    timeline = list(all_tweets(corpus, timeline=True))
    assert timeline and all(t.retweeted_user is not None for t in timeline)
    assert all(t.text.startswith("RT @") for t in timeline)


def test_followed_set_limits_own_side_accounts():
    params = base_params(polarization=1.0, accounts_per_user=3,
                         tweets_per_user=CountSpec(20, 20))
    corpus, account_sides = generate(params)
    gold = gold_labels(corpus)
    for record in corpus.users.values():
        accounts = {t.retweeted_user for t in record.topical_tweets}
        assert len(accounts) <= 3
        assert all(account_sides[a] == gold[record.user_id] for a in accounts)


def test_retweet_text_format_and_vocabulary():
    corpus, _ = generate(base_params(polarization=1.0, text_vocab_per_side=50))
    prefixes = {0: ("wleft", "wshare"), 1: ("wright", "wshare")}
    for record in corpus.users.values():
        for tweet in record.topical_tweets:
            header, body = tweet.text.split(": ", 1)
            assert header == f"RT @{tweet.retweeted_user}"
            for word in body.split():
                assert word.startswith(prefixes[record.gold_label])


# ---------------------------------------------------------------- validation

@pytest.mark.parametrize("overrides", [
    {"polarization": 0.4},
    {"polarization": 1.01},
    {"n_users_per_side": 0},
    {"text_vocab_per_side": 0},
    {"tweets_per_user": CountSpec(0, 5)},
    {"tweets_per_user": CountSpec(5, 2)},
    {"tweets_per_user": CountSpec(1, 5, "triangle")},
    {"accounts_per_user": 0},
    {"accounts_per_user": 21},
    {"retweet_probability": -0.1},
    {"timeline_retweet_probability": 1.5},
])
def test_parameter_validation(overrides):
    with pytest.raises(ValueError):
        generate(base_params(**overrides))
