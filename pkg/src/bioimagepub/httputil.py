"""Shared HTTP retry helpers for the S3, OMERO, BioStudies and hub clients."""

from __future__ import annotations

import random
import time
from dataclasses import dataclass

import requests


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff schedule applied to 5xx responses and timeouts.

    4xx responses are never retried; they signal caller mistakes.
    """

    attempts: int = 3
    base_delay: float = 0.5
    factor: float = 2.0
    jitter: float = 0.0  # uniform extra sleep fraction, e.g. 0.5 adds up to +50%

    def sleep_for(self, attempt: int) -> float:
        delay = self.base_delay * self.factor**attempt
        if self.jitter:
            delay *= 1.0 + random.random() * self.jitter
        return delay


#: source-ingest / metadata-harvest default: 3 attempts from 500 ms
SOURCE_RETRY = RetryPolicy(attempts=3, base_delay=0.5)

#: hub default: 5 attempts from 500 ms with jitter
HUB_RETRY = RetryPolicy(attempts=5, base_delay=0.5, jitter=0.5)


def request_with_retry(
    session: requests.Session,
    method: str,
    url: str,
    *,
    policy: RetryPolicy = SOURCE_RETRY,
    **kwargs,
) -> requests.Response:
    """Issue one HTTP request, retrying on timeouts, connection errors and 5xx.

    Returns the final response (possibly still a 4xx/5xx; callers map status
    codes to their own errors). Raises the last transport exception when every
    attempt failed to produce a response.
    """
    last_exc: Exception | None = None
    for attempt in range(policy.attempts):
        try:
            resp = session.request(method, url, **kwargs)
        except (requests.ConnectionError, requests.Timeout) as exc:
            last_exc = exc
            if attempt + 1 < policy.attempts:
                time.sleep(policy.sleep_for(attempt))
            continue
        if resp.status_code >= 500 and attempt + 1 < policy.attempts:
            time.sleep(policy.sleep_for(attempt))
            continue
        return resp
    assert last_exc is not None
    raise last_exc
