"""Synthetic polarized retweet corpus with known ground truth.

Users split into two equal sides.  By default every tweet is a retweet:
with probability ``polarization`` the retweeted account belongs to the
user's own side, otherwise to the opposite side.  Account popularity
within a side follows a Zipf law (exponent 1.1), so a few accounts
dominate.
Tweet bodies draw words from the retweeted account's side vocabulary;
20% of each side's vocabulary is shared across sides.  Generation is a
pure function of the parameters, including the seed.
"""

from dataclasses import dataclass

import numpy as np

from .corpus import Tweet, UserCorpus, UserRecord

ZIPF_EXPONENT = 1.1
SHARED_VOCAB_FRACTION = 0.2
BODY_WORDS_LOW = 3
BODY_WORDS_HIGH = 8


@dataclass(frozen=True)
class CountSpec:
    """Distribution of per-user counts: uniform on [low, high], or zipf
    (weights 1/rank^1.1 favouring low counts)."""
    low: int
    high: int
    shape: str = "uniform"

    def validate(self) -> None:
        if not 1 <= self.low <= self.high:
            raise ValueError(f"need 1 <= low <= high, got [{self.low}, {self.high}]")
        if self.shape not in ("uniform", "zipf"):
            raise ValueError(f"unknown count shape {self.shape!r}")


@dataclass(frozen=True)
class SynthParams:
    """Knobs for the generator.

    accounts_per_user=None gives every user the side-wide Zipf retweet
    profile.  Setting it to an integer F instead gives each user their own
    followed set of F own-side accounts (picked Zipf-weighted without
    replacement) that their own-side retweets draw from uniformly; this
    adds the per-user idiosyncrasy real echo chambers have, where a single
    retweet is weak evidence of stance.

    retweet_probability below 1.0 makes some topical tweets original posts
    (side-skewed body words, no retweeted account), the regime of sparse
    users whose few topical tweets carry no retweet evidence at all;
    timeline_retweet_probability does the same for timeline tweets.
    """
    n_users_per_side: int
    n_accounts_per_side: int
    polarization: float
    tweets_per_user: CountSpec
    text_vocab_per_side: int
    seed: int
    timeline_tweets_per_user: CountSpec | None = None
    accounts_per_user: int | None = None
    retweet_probability: float = 1.0
    timeline_retweet_probability: float = 1.0

    def validate(self) -> None:
        if self.n_users_per_side < 1 or self.n_accounts_per_side < 1:
            raise ValueError("need at least one user and one account per side")
        if not 0.5 <= self.polarization <= 1.0:
            raise ValueError(f"polarization must be in [0.5, 1], got {self.polarization}")
        if self.text_vocab_per_side < 1:
            raise ValueError("text_vocab_per_side must be >= 1")
        self.tweets_per_user.validate()
        if self.timeline_tweets_per_user is not None:
            self.timeline_tweets_per_user.validate()
        if self.accounts_per_user is not None and not (
                1 <= self.accounts_per_user <= self.n_accounts_per_side):
            raise ValueError(f"accounts_per_user must be in [1, n_accounts_per_side], "
                             f"got {self.accounts_per_user}")
        for name in ("retweet_probability", "timeline_retweet_probability"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")


def _count_sampler(spec: CountSpec, rng: np.random.Generator):
    values = np.arange(spec.low, spec.high + 1)
    if spec.shape == "uniform" or values.size == 1:
        return lambda: int(rng.integers(spec.low, spec.high + 1))
    weights = 1.0 / np.arange(1, values.size + 1) ** ZIPF_EXPONENT
    cumulative = np.cumsum(weights / weights.sum())
    return lambda: int(values[np.searchsorted(cumulative, rng.random())])


def generate(params: SynthParams, topic: str = "synthetic") -> tuple[UserCorpus, dict[str, int]]:
    """Build the corpus and the account -> side map.

    Gold labels partition users exactly in half; user ids interleave sides
    (u00000 is side 0, u00001 side 1, ...) so id-ordered tie-breaks stay
    side-neutral.
    """
    params.validate()
    rng = np.random.default_rng(params.seed)
    n_accounts = params.n_accounts_per_side
    account_names = [f"acct{j:05d}" for j in range(2 * n_accounts)]
    account_sides = {name: j % 2 for j, name in enumerate(account_names)}
    side_accounts = ([n for n in account_names if account_sides[n] == 0],
                     [n for n in account_names if account_sides[n] == 1])
    zipf = 1.0 / np.arange(1, n_accounts + 1) ** ZIPF_EXPONENT
    cumulative = np.cumsum(zipf / zipf.sum())

    n_shared = max(1, round(SHARED_VOCAB_FRACTION * params.text_vocab_per_side))
    n_own = params.text_vocab_per_side - n_shared
    shared_words = [f"wshare{i}" for i in range(n_shared)]
    side_vocab = ([f"wleft{i}" for i in range(n_own)] + shared_words,
                  [f"wright{i}" for i in range(n_own)] + shared_words)

    draw_tweet_count = _count_sampler(params.tweets_per_user, rng)
    draw_timeline_count = (None if params.timeline_tweets_per_user is None
                           else _count_sampler(params.timeline_tweets_per_user, rng))

    zipf_probs = zipf / zipf.sum()

    def draw_followed(side: int) -> list[str]:
        picked = rng.choice(n_accounts, size=params.accounts_per_user,
                            replace=False, p=zipf_probs)
        return [side_accounts[side][j] for j in picked]

    def make_tweet(tweet_id: str, user_id: str, user_side: int,
                   followed: list[str] | None, retweet_probability: float) -> Tweet:
        is_retweet = rng.random() < retweet_probability
        own = rng.random() < params.polarization
        content_side = user_side if own else 1 - user_side
        account = None
        if is_retweet:
            if own and followed is not None:
                account = followed[int(rng.integers(len(followed)))]
            else:
                account = side_accounts[content_side][
                    np.searchsorted(cumulative, rng.random())]
        vocab = side_vocab[content_side]
        n_words = int(rng.integers(BODY_WORDS_LOW, BODY_WORDS_HIGH + 1))
        words = " ".join(vocab[w] for w in rng.integers(0, len(vocab), size=n_words))
        if account is None:
            return Tweet(id=tweet_id, user_id=user_id, topic=topic, text=words)
        return Tweet(id=tweet_id, user_id=user_id, topic=topic,
                     text=f"RT @{account}: {words}", retweeted_user=account)

    users: dict[str, UserRecord] = {}
    for i in range(2 * params.n_users_per_side):
        uid = f"u{i:05d}"
        side = i % 2
        followed = None if params.accounts_per_user is None else draw_followed(side)
        topical = tuple(make_tweet(f"t{i:05d}x{t:03d}", uid, side, followed,
                                   params.retweet_probability)
                        for t in range(draw_tweet_count()))
        timeline = ()
        if draw_timeline_count is not None:
            timeline = tuple(make_tweet(f"g{i:05d}x{t:03d}", uid, side, followed,
                                        params.timeline_retweet_probability)
                             for t in range(draw_timeline_count()))
        users[uid] = UserRecord(user_id=uid, topical_tweets=topical,
                                timeline_tweets=timeline, gold_label=side)
    return UserCorpus(topic=topic, users=users), account_sides


def gold_labels(corpus: UserCorpus) -> dict[str, int]:
    """Extract the user -> side map from a generated corpus."""
    return {uid: rec.gold_label for uid, rec in corpus.users.items()
            if rec.gold_label is not None}
