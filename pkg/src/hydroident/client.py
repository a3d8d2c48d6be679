"""Client for the identification service.

The default transport runs the FastAPI app in process, so the CLI works
with no server running. Passing a base URL switches to a remote server;
request and response bodies are identical either way.
"""

from __future__ import annotations

from typing import Optional


class ServiceError(Exception):
    """Error reported by the service; error_type is 'data' or 'numerical'."""

    def __init__(self, error_type: str, message: str):
        self.error_type = error_type
        super().__init__(message)


class ServiceClient:
    def __init__(self, server: Optional[str] = None):
        if server is None:
            import warnings
            with warnings.catch_warnings():
                # this starlette build nags about its own test client import
                warnings.filterwarnings("ignore", message=".*httpx.*")
                from fastapi.testclient import TestClient

            from .service import create_app
            self._http = TestClient(create_app())
        else:
            import httpx

            # identification runs can take minutes, so no read timeout
            self._http = httpx.Client(base_url=server, timeout=None)

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "ServiceClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _post(self, path: str, payload: dict) -> dict:
        import httpx
        try:
            resp = self._http.post(path, json=payload)
        except httpx.HTTPError as exc:
            # unreachable or misbehaving server; surfaced as a data error
            raise ServiceError("data", f"service unreachable: {exc}") from exc
        if resp.status_code == 200:
            return resp.json()
        try:
            body = resp.json()
        except ValueError:
            body = {}
        if isinstance(body, dict) and "error_type" in body:
            raise ServiceError(body["error_type"], body.get("message", ""))
        if resp.status_code == 422:
            # envelope rejected before reaching the handlers
            raise ServiceError("data", f"invalid request: {body.get('detail')}")
        raise ServiceError("numerical", f"HTTP {resp.status_code} from service")

    def simulate(self, model: dict, coeffs: dict, duration: float,
                 rate: float, dt: float) -> dict:
        return self._post("/simulate", {"model": model, "coeffs": coeffs,
                                        "duration": duration, "rate": rate,
                                        "dt": dt})

    def synth(self, model: dict, coeffs: dict, duration: float, rate: float,
              noise_std: float, seed: int, dt: float) -> dict:
        return self._post("/synth", {"model": model, "coeffs": coeffs,
                                     "duration": duration, "rate": rate,
                                     "noise_std": noise_std, "seed": seed,
                                     "dt": dt})

    def identify(self, model: dict, target: dict, *, max_evals: int,
                 sigma0: float, seed: int, workers: int, dt: float,
                 include_joint_params: bool,
                 loss_keypoints: Optional[list] = None) -> dict:
        return self._post("/identify", {
            "model": model, "target": target, "max_evals": max_evals,
            "sigma0": sigma0, "seed": seed, "workers": workers, "dt": dt,
            "include_joint_params": include_joint_params,
            "loss_keypoints": loss_keypoints})

    def evaluate(self, model: dict, coeffs: dict, target: dict) -> dict:
        return self._post("/evaluate", {"model": model, "coeffs": coeffs,
                                        "target": target})
