import logging
import math

import pytest

from sumforge.decoding import (
    EOS,
    BatchItemError,
    DecodeConfig,
    batch_decode,
    beam_search,
    beam_search_hypothesis,
)
from sumforge.rng import keyed_rng


def logdist(weights: dict) -> dict:
    """Normalize positive weights into log-probabilities."""
    total = sum(weights.values())
    return {k: math.log(v / total) for k, v in weights.items()}


class ForcedScorer:
    """Deterministically prefers one target sequence, then EOS."""

    def __init__(self, seq):
        self.seq = tuple(seq)

    def next_scores(self, source, prefix):
        want = self.seq[len(prefix)] if len(prefix) < len(self.seq) else EOS
        weights = {t: 1.0 for t in ("a", "b", "c", EOS)}
        weights[want] = 1000.0
        return logdist(weights)


class CyclicScorer:
    """Adversarially prefers a repeating token cycle.

    EOS is negligible until min_len, then affordable, so the best
    hypothesis has to run through the cycle long enough to repeat
    trigrams (unless blocking intervenes).
    """

    def __init__(self, cycle, min_len=12):
        self.cycle = list(cycle)
        self.min_len = min_len

    def next_scores(self, source, prefix):
        want = self.cycle[len(prefix) % len(self.cycle)]
        vocab = sorted(set(self.cycle) | {"x", "y"})
        weights = {t: 1.0 for t in vocab}
        weights[want] = 10000.0
        # stopping early must cost more than any chain of off-cycle
        # detours, or the decoder just emits EOS at step 0
        weights[EOS] = 1e-30 if len(prefix) < self.min_len else 1.0
        return logdist(weights)


class ContextFreeScorer:
    """Scores depend only on prefix length; used for beam dominance."""

    def __init__(self, seed, max_len=12):
        rng = keyed_rng(seed, "ctxfree")
        self.tables = []
        for _ in range(max_len + 1):
            weights = {t: float(w) for t, w in zip("abcd", rng.uniform(0.1, 5.0, 4))}
            weights[EOS] = float(rng.uniform(0.05, 1.0))
            self.tables.append(logdist(weights))

    def next_scores(self, source, prefix):
        return self.tables[min(len(prefix), len(self.tables) - 1)]


class NoEosScorer:
    def next_scores(self, source, prefix):
        scores = logdist({"a": 1.0, "b": 1.0})
        scores[EOS] = -math.inf
        return scores


def repeated_trigram(tokens):
    tris = list(zip(tokens, tokens[1:], tokens[2:]))
    return len(tris) != len(set(tris))


class TestBeamSearch:
    def test_forced_single_path(self):
        cfg = DecodeConfig(beam_size=5, max_len=10)
        assert beam_search(ForcedScorer(["a", "b", "c"]), [], cfg) == ["a", "b", "c"]

    def test_blocking_eliminates_repeats(self):
        cfg = DecodeConfig(beam_size=4, max_len=30, block_trigrams=True)
        out = beam_search(CyclicScorer(["a", "b"]), [], cfg)
        assert len(out) >= 12
        assert not repeated_trigram(out)

    def test_unblocked_cycle_repeats(self):
        cfg = DecodeConfig(beam_size=4, max_len=30, block_trigrams=False)
        out = beam_search(CyclicScorer(["a", "b"]), [], cfg)
        assert repeated_trigram(out)

    def test_beam_one_equals_greedy(self):
        # distinct per-step preferences with an EOS spike at length 5
        class PathScorer:
            def next_scores(self, source, prefix):
                prefs = ["a", "c", "b", "a", "d"]
                if len(prefix) < 5:
                    weights = {t: 1.0 for t in "abcd"}
                    weights[prefs[len(prefix)]] = 500.0
                    weights[EOS] = 1e-9
                else:
                    weights = {t: 1.0 for t in "abcd"}
                    weights[EOS] = 500.0
                return logdist(weights)

        scorer = PathScorer()
        got = beam_search(scorer, [], DecodeConfig(beam_size=1, max_len=12))
        # greedy reference: argmax token at each step until EOS wins
        greedy = []
        while len(greedy) < 12:
            scores = scorer.next_scores([], greedy)
            best = max(sorted(scores), key=lambda t: scores[t])
            if best == EOS:
                break
            greedy.append(best)
        assert greedy == ["a", "c", "b", "a", "d"]
        assert got == greedy

    def test_beam_dominance_context_free(self):
        cfg_of = lambda k: DecodeConfig(beam_size=k, max_len=8, block_trigrams=False)
        for seed in range(10):
            scorer = ContextFreeScorer(seed)
            scores = [
                beam_search_hypothesis(scorer, [], cfg_of(k)).score
                for k in (1, 2, 4, 8)
            ]
            assert all(a <= b + 1e-12 for a, b in zip(scores, scores[1:]))

    def test_tie_broken_lexicographically(self):
        class TieScorer:
            def next_scores(self, source, prefix):
                if not prefix:
                    scores = logdist({"b": 1.0, "a": 1.0, "c": 1.0})
                    scores[EOS] = -math.inf
                    return scores
                return logdist({"a": 0.001, "b": 0.001, "c": 0.001, EOS: 1000.0})

        cfg = DecodeConfig(beam_size=3, max_len=5)
        assert beam_search(TieScorer(), [], cfg) == ["a"]

    def test_max_len_forces_eos(self):
        # EOS never becomes attractive, but stays finite: the cap must
        # still finish every hypothesis
        cfg = DecodeConfig(beam_size=2, max_len=6)
        hyp = beam_search_hypothesis(CyclicScorer(["a", "b"], min_len=999), [], cfg)
        assert hyp.finished
        assert len(hyp.tokens) <= 6

    def test_unfinishable_returns_flagged_hypothesis(self, caplog):
        cfg = DecodeConfig(beam_size=2, max_len=4)
        hyp = beam_search_hypothesis(NoEosScorer(), [], cfg)
        assert not hyp.finished
        assert len(hyp.tokens) == 4
        with caplog.at_level(logging.WARNING, logger="sumforge.decoding"):
            beam_search(NoEosScorer(), [], cfg)
        assert any("unfinished" in r.message for r in caplog.records)

    def test_deterministic_across_runs(self):
        scorer = ContextFreeScorer(3)
        cfg = DecodeConfig(beam_size=4, max_len=10)
        assert beam_search(scorer, [], cfg) == beam_search(scorer, [], cfg)

    def test_fully_blocked_step_falls_back_to_eos(self):
        # after "a a a", continuing with 'a' would repeat (a,a,a); EOS is
        # the only unblocked candidate left, so decoding stops there
        class OnlyA:
            def next_scores(self, source, prefix):
                if len(prefix) < 3:
                    return logdist({"a": 1.0, EOS: 1e-12})
                return logdist({"a": 1.0, EOS: 1.0})

        cfg = DecodeConfig(beam_size=1, max_len=50, block_trigrams=True)
        out = beam_search(OnlyA(), [], cfg)
        assert out == ["a", "a", "a"]
        assert not repeated_trigram(out)

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            DecodeConfig(beam_size=0)
        with pytest.raises(ValueError):
            DecodeConfig(max_len=0)
        with pytest.raises(ValueError):
            DecodeConfig(length_normalization_alpha=-1)


class TestBatchDecode:
    def test_empty_stream(self):
        cfg = DecodeConfig(beam_size=2, max_len=5)
        assert list(batch_decode(ForcedScorer("ab"), [], cfg)) == []

    def test_matches_standalone_calls(self):
        scorer = ContextFreeScorer(11)
        cfg = DecodeConfig(beam_size=3, max_len=8)
        sources = [["s1"], ["s2"], ["s3"]]
        batched = list(batch_decode(scorer, sources, cfg))
        single = [beam_search(scorer, s, cfg) for s in sources]
        assert batched == single

    def test_error_carries_item_index(self):
        class Exploding:
            def next_scores(self, source, prefix):
                if source == ["boom"]:
                    raise RuntimeError("scorer blew up")
                return logdist({"a": 1.0, EOS: 1.0})

        cfg = DecodeConfig(beam_size=1, max_len=3)
        gen = batch_decode(Exploding(), [["ok"], ["boom"]], cfg)
        assert next(gen) == []  # immediate EOS beats any continuation
        with pytest.raises(BatchItemError) as exc:
            next(gen)
        assert exc.value.index == 1
