"""Language-model backends: a scripted stub and a chat-completions HTTP client."""

from __future__ import annotations

import os
import time
from pathlib import Path
from typing import Protocol

from .prompts import PromptBundle

RETRIES = 3
MAX_ATTACHMENTS = 8


class BackendError(RuntimeError):
    pass


class BackendTimeout(BackendError):
    pass


class TransportError(BackendError):
    """A failure worth retrying (connection reset, 5xx, ...)."""


class AttachmentLimit(BackendError):
    pass


class Backend(Protocol):
    max_attachments: int

    def complete(self, bundle: PromptBundle) -> str: ...


class StubBackend:
    """Scripted replies looked up by role, stage and branch.

    For a bundle of role R at stage s and branch b the first existing file of
    ``R/s{s}_b{b}.txt``, ``R/s{s}.txt``, ``R/default.txt`` under ``root`` is
    returned verbatim.  Without a file the built-in corpus answers.
    """

    max_attachments = MAX_ATTACHMENTS

    def __init__(self, root=None, fallback=True):
        self.root = Path(root) if root is not None else None
        self.fallback = fallback
        self.calls: list[PromptBundle] = []

    def _scripted(self, bundle: PromptBundle) -> str | None:
        if self.root is None:
            return None
        d = self.root / bundle.role.value
        names = [f"s{bundle.stage}.txt", "default.txt"]
        if bundle.branch is not None:
            names.insert(0, f"s{bundle.stage}_b{bundle.branch}.txt")
        for name in names:
            if (d / name).is_file():
                return (d / name).read_text(encoding="utf-8")
        return None

    def complete(self, bundle: PromptBundle) -> str:
        self.calls.append(bundle)
        text = self._scripted(bundle)
        if text is None and self.fallback:
            from .stub import default_reply
            text = default_reply(bundle)
        if text is None:
            raise BackendError(f"no scripted reply for {bundle.role.value} stage {bundle.stage}")
        return text


class RemoteBackend:
    """Chat-completions endpoint; URL, key and model come from the environment."""

    max_attachments = MAX_ATTACHMENTS

    def __init__(self, url: str | None = None, key: str | None = None, model: str | None = None,
                 timeout: float = 120.0, transport=None):
        import httpx

        self.url = url or os.environ.get("OGR_BACKEND_URL")
        self.key = key or os.environ.get("OGR_BACKEND_KEY")
        self.model = model or os.environ.get("OGR_BACKEND_MODEL", "default")
        if not self.url:
            raise BackendError("remote backend needs OGR_BACKEND_URL")
        headers = {"Authorization": f"Bearer {self.key}"} if self.key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)
        self._httpx = httpx

    def request_body(self, bundle: PromptBundle) -> dict:
        content = bundle.user
        for k, a in enumerate(bundle.attachments):
            content += f"\n\n[attachment {k}]\n{a}"
        return {"model": self.model, "messages": [{"role": "system", "content": bundle.system},
                                                 {"role": "user", "content": content}]}

    def complete(self, bundle: PromptBundle) -> str:
        httpx = self._httpx
        try:
            r = self._client.post(self.url, json=self.request_body(bundle))
        except httpx.TimeoutException as e:
            raise BackendTimeout(str(e)) from e
        except httpx.TransportError as e:
            raise TransportError(str(e)) from e
        if r.status_code >= 500 or r.status_code == 429:
            raise TransportError(f"HTTP {r.status_code}")
        if r.status_code >= 400:
            raise BackendError(f"HTTP {r.status_code}: {r.text[:200]}")
        try:
            return r.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise BackendError(f"malformed completion body: {e}") from e


def exchange(backend, bundle: PromptBundle, mem=None, retries: int = RETRIES, backoff: float = 0.0):
    """Send ``bundle``; returns (reply, dialogue record id or None).

    Transport failures and timeouts are retried up to ``retries`` attempts in
    total.  An empty reply is an error.
    """
    if len(bundle.attachments) > backend.max_attachments:
        raise AttachmentLimit(f"{len(bundle.attachments)} attachments exceed the cap of {backend.max_attachments}")
    last = None
    for attempt in range(retries):
        try:
            text = backend.complete(bundle)
            break
        except (TransportError, BackendTimeout) as e:
            last = e
            if backoff:
                time.sleep(backoff * 2**attempt)
    else:
        raise last
    if not text:
        raise BackendError("backend returned an empty reply")
    rid = None
    if mem is not None:
        from ..memory import Kind
        rid = mem.append(bundle.stage, Kind.DIALOGUE, {"prompt": bundle.to_dict(), "response": text},
                         branch=bundle.branch, role=bundle.role.value)
    return text, rid


def invoke(backend, bundle: PromptBundle, mem=None, retries: int = RETRIES, backoff: float = 0.0) -> str:
    """Reply text verbatim; the exchange is logged to ``mem`` when given."""
    return exchange(backend, bundle, mem, retries, backoff)[0]
