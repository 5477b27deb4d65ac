"""Top-K ranking metrics under the all-ranking protocol."""
import math


def _check(ranked, relevant, k):
    if k < 1:
        raise ValueError("k must be >= 1")
    if not relevant:
        raise ValueError("relevant set is empty; exclude the user instead of scoring 0")
    if len(set(ranked)) != len(ranked):
        raise ValueError("ranked list contains duplicates")


def recall_at_k(ranked, relevant, k: int) -> float:
    """Fraction of the relevant items that appear in the top k."""
    _check(ranked, relevant, k)
    hits = sum(1 for v in ranked[:k] if v in relevant)
    return hits / len(relevant)


def hr_at_k(ranked, relevant, k: int) -> float:
    """1.0 if any relevant item appears in the top k, else 0.0."""
    _check(ranked, relevant, k)
    return 1.0 if any(v in relevant for v in ranked[:k]) else 0.0


def ndcg_at_k(ranked, relevant, k: int) -> float:
    """Binary-gain NDCG with log2 discount; ideal DCG uses min(k, |relevant|) ones."""
    _check(ranked, relevant, k)
    dcg = sum(1.0 / math.log2(i + 2) for i, v in enumerate(ranked[:k]) if v in relevant)
    idcg = sum(1.0 / math.log2(i + 2) for i in range(min(k, len(relevant))))
    return dcg / idcg
