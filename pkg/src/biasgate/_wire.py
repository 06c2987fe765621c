"""Shared HTTP plumbing for the remote backends.

One retry policy serves both the chat and embedding clients: connection
failures and 5xx responses are retried with exponential backoff, anything
else fails fast. Jitter can be disabled so tests get deterministic timing.
"""

from __future__ import annotations

import logging
import random
import time
from dataclasses import dataclass

import requests

from .errors import BackendUnavailable

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RetryPolicy:
    """retries counts extra attempts after the first; 2 means 3 tries."""

    retries: int = 2
    backoff_s: float = 0.5
    jitter: bool = True

    def delay(self, attempt: int) -> float:
        base = self.backoff_s * (2 ** attempt)
        if self.jitter:
            base += random.uniform(0.0, self.backoff_s)
        return base


def post_json(
    url: str,
    payload: dict,
    *,
    timeout: float,
    policy: RetryPolicy,
    headers: dict[str, str] | None = None,
) -> dict:
    """POST a JSON payload and return the decoded JSON response.

    Raises BackendUnavailable once the policy is exhausted (unreachable host
    or repeated 5xx) or immediately on a non-retryable response (4xx status,
    body that is not a JSON object).
    """
    last_error = "no attempts made"
    for attempt in range(policy.retries + 1):
        if attempt:
            time.sleep(policy.delay(attempt - 1))
        try:
            response = requests.post(url, json=payload, timeout=timeout, headers=headers)
        except requests.RequestException as exc:
            last_error = f"request failed: {exc}"
            log.debug("POST %s attempt %d: %s", url, attempt + 1, last_error)
            continue
        if response.status_code >= 500:
            last_error = f"server error {response.status_code}"
            log.debug("POST %s attempt %d: %s", url, attempt + 1, last_error)
            continue
        if response.status_code != 200:
            raise BackendUnavailable(
                f"{url} answered {response.status_code}: {response.text[:200]}"
            )
        try:
            body = response.json()
        except ValueError:
            raise BackendUnavailable(f"{url} returned a non-JSON body") from None
        if not isinstance(body, dict):
            raise BackendUnavailable(f"{url} returned a non-object JSON body")
        return body
    raise BackendUnavailable(f"{url} unavailable after {policy.retries + 1} attempts: {last_error}")


def auth_headers(api_key: str | None, header_name: str) -> dict[str, str]:
    """Build auth headers; Authorization keys get the Bearer prefix."""
    if not api_key:
        return {}
    if header_name.lower() == "authorization":
        return {header_name: f"Bearer {api_key}"}
    return {header_name: api_key}
