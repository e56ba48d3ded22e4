"""Client over the service layer: in-process by default, HTTP on request.

The CLI goes through this client, so local runs and runs against a remote
service produce identical response models and therefore identical artifacts.
"""

from __future__ import annotations

import httpx

from .errors import ConfigError, EitlockError
from .runner import RUNNERS, run_validate
from .scenario import ScenarioConfig
from .schemas import (BeatResponse, ErrorSignalResponse, FitResponse,
                      LockResponse, SpectrumResponse, ValidateResponse)

_RESPONSE_MODELS = {
    "validate": ValidateResponse,
    "spectrum": SpectrumResponse,
    "error-signal": ErrorSignalResponse,
    "lock": LockResponse,
    "beat": BeatResponse,
    "fit": FitResponse,
}


class RemoteError(EitlockError):
    """The service reported a failure."""


class ServiceClient:
    """Dispatches a scenario to the compute pipelines.

    Without a base_url the pipelines run in-process. With one, requests go
    over HTTP; an existing httpx-compatible client (e.g. a test client bound
    to the app) can be injected instead.
    """

    def __init__(self, base_url: str | None = None,
                 http_client: httpx.Client | None = None,
                 timeout: float = 600.0):
        self._owns_http = False
        if http_client is not None:
            self._http = http_client
        elif base_url is not None:
            self._http = httpx.Client(base_url=base_url, timeout=timeout)
            self._owns_http = True
        else:
            self._http = None

    def close(self) -> None:
        if self._http is not None and self._owns_http:
            self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def run(self, subcommand: str, config: ScenarioConfig):
        if subcommand not in _RESPONSE_MODELS:
            raise ValueError(f"unknown subcommand {subcommand!r}")
        if self._http is None:
            if subcommand == "validate":
                return run_validate(config)
            return RUNNERS[subcommand](config)
        resp = self._http.post(f"/v1/{subcommand}",
                               json=config.model_dump(mode="json"))
        if resp.status_code == 422:
            detail = resp.json().get("detail", [])
            raise ConfigError(
                [f"{'.'.join(str(p) for p in e.get('loc', [])[1:])}: "
                 f"{e.get('msg', '')}" for e in detail])
        if resp.status_code != 200:
            try:
                err = resp.json().get("error", {})
                raise RemoteError(f"{err.get('type', 'error')}: "
                                  f"{err.get('message', resp.text)}")
            except ValueError:
                raise RemoteError(f"HTTP {resp.status_code}: {resp.text}")
        return _RESPONSE_MODELS[subcommand].model_validate(resp.json())
