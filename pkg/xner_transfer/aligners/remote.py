"""
HTTP client for a remotely served neural aligner.

Wire contract: POST {"entity": str, "tokens": [str, ...]} and receive
{"mask": [0|1, ...], "scores": [float, ...]} where "scores" is optional.
Each maximal run of 1s in the mask is one aligned span.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, List, Optional, Sequence

import requests

from ..errors import ProtocolError, TransportError
from .base import Aligner, AlignmentQuery, AlignmentResult, mask_to_spans

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 10.0


def parse_response(
    payload: Any, n_tokens: int, min_score: float = 0.0
) -> AlignmentResult:
    """
    Validate a decoded response body and turn it into an AlignmentResult.

    Raises:
        ProtocolError: If the mask is missing, has the wrong length or holds
            values other than 0 and 1, or if scores are malformed
    """
    if not isinstance(payload, dict) or "mask" not in payload:
        raise ProtocolError("response has no 'mask' field")
    mask = payload["mask"]
    if not isinstance(mask, list) or len(mask) != n_tokens:
        raise ProtocolError(
            f"mask length {len(mask) if isinstance(mask, list) else '?'} "
            f"does not match {n_tokens} tokens"
        )
    if any(type(bit) is not int or bit not in (0, 1) for bit in mask):
        raise ProtocolError("mask must contain only 0 and 1")

    scores = payload.get("scores")
    if scores is not None:
        if not isinstance(scores, list) or len(scores) != n_tokens:
            raise ProtocolError("scores must be a list as long as the mask")
        if not all(
            isinstance(s, (int, float)) and not isinstance(s, bool) and 0 <= s <= 1
            for s in scores
        ):
            raise ProtocolError("scores must be numbers in [0, 1]")
        scores = [float(s) for s in scores]

    spans = [s for s in mask_to_spans(mask, scores) if s.score >= min_score]
    return AlignmentResult(tuple(spans))


class RemoteAligner(Aligner):
    """
    Client for the remote aligner service.

    Args:
        endpoint: URL accepting the alignment POST
        timeout: Seconds before a request counts as failed
        max_in_flight: Upper bound on concurrent requests in align_many
        min_score: Spans whose mean token score falls below this are dropped
        session: Optional requests.Session (a new one is created otherwise)
    """

    name = "remote"

    def __init__(
        self,
        endpoint: str,
        timeout: float = DEFAULT_TIMEOUT,
        max_in_flight: int = 4,
        min_score: float = 0.0,
        session: Optional[requests.Session] = None,
    ):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        self.endpoint = endpoint
        self.timeout = timeout
        self.max_in_flight = max_in_flight
        self.min_score = min_score
        self.session = session or requests.Session()

    def align(self, query: AlignmentQuery) -> AlignmentResult:
        body = {"entity": query.entity, "tokens": list(query.tokens)}
        try:
            response = self.session.post(self.endpoint, json=body, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"{self.endpoint}: {exc}") from exc
        if response.status_code != 200:
            raise TransportError(f"{self.endpoint}: HTTP {response.status_code}")
        try:
            payload = response.json()
        except ValueError as exc:
            raise ProtocolError(f"{self.endpoint}: response is not JSON") from exc
        return parse_response(payload, len(query.tokens), self.min_score)

    def align_many(self, queries: Sequence[AlignmentQuery]) -> List[AlignmentResult]:
        if len(queries) <= 1 or self.max_in_flight == 1:
            return super().align_many(queries)
        logger.debug(
            "aligning %d queries with up to %d in flight",
            len(queries),
            self.max_in_flight,
        )
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            return list(pool.map(self.align, queries))


def align_remote(
    query: AlignmentQuery, endpoint: str, timeout: float = DEFAULT_TIMEOUT
) -> AlignmentResult:
    """One-off remote alignment of a single query."""
    return RemoteAligner(endpoint, timeout=timeout).align(query)
