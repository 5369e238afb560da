"""HTTP client for remote reconstruction services.

Protocol: GET /v1/health returns the server geometry; POST /v1/reconstruct
takes a JSON body holding a base64 raw little-endian float32 image plus the
visible patch indices and returns the reconstruction losses. Server errors
arrive as a JSON envelope {code, message}.
"""

from __future__ import annotations

import base64
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import requests

from .errors import GeometryError, OracleError
from .oracle import PatchSet, Reconstruction
from .patch_grid import GridSpec, assemble, spec_for_patches

ENV_URL = "KPP_ORACLE_URL"
DEFAULT_TIMEOUT = 30.0
DEFAULT_RETRIES = 2
DEFAULT_MAX_INFLIGHT = 4

HEALTH_PATH = "/v1/health"
RECONSTRUCT_PATH = "/v1/reconstruct"


class OracleConnectionError(OracleError):
    """The server could not be reached (connect failure or timeout)."""


class OracleProtocolError(OracleError):
    """The server answered with something that is not valid protocol."""


class OracleServerError(OracleError):
    """The server reported a structured error envelope."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


class GeometryMismatchError(OracleError):
    """The server's grid geometry does not match the local one."""


def encode_image(image: np.ndarray) -> str:
    """Base64 of the raw little-endian float32 pixel buffer, row-major and
    channel-interleaved."""
    buf = np.ascontiguousarray(image, dtype="<f4").tobytes()
    return base64.b64encode(buf).decode("ascii")


def decode_image(data: str, height: int, width: int, channels: int) -> np.ndarray:
    raw = base64.b64decode(data.encode("ascii"), validate=True)
    expected = 4 * height * width * channels
    if len(raw) != expected:
        raise ValueError(f"decoded image holds {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, dtype="<f4").reshape(height, width, channels).copy()


@dataclass(frozen=True)
class OracleRequest:
    image: str  # base64 float32 buffer
    height: int
    width: int
    channels: int
    patch_size: int
    unmasked: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.height <= 0 or self.width <= 0 or self.channels <= 0 or self.patch_size <= 0:
            raise ValueError("request dimensions must be positive")
        if self.height % self.patch_size or self.width % self.patch_size:
            raise ValueError("patch_size must divide both image dimensions")
        n = (self.height // self.patch_size) * (self.width // self.patch_size)
        if len(set(self.unmasked)) != len(self.unmasked):
            raise ValueError("unmasked indices must be distinct")
        if any(not 0 <= i < n for i in self.unmasked):
            raise ValueError(f"unmasked indices must lie in [0, {n})")

    @classmethod
    def from_tensor(
        cls, image: np.ndarray, patch_size: int, unmasked: Sequence[int]
    ) -> "OracleRequest":
        h, w, c = image.shape
        return cls(
            image=encode_image(image),
            height=int(h),
            width=int(w),
            channels=int(c),
            patch_size=int(patch_size),
            unmasked=tuple(sorted(int(i) for i in unmasked)),
        )

    def to_payload(self) -> dict:
        return {
            "image": self.image,
            "height": self.height,
            "width": self.width,
            "channels": self.channels,
            "patch_size": self.patch_size,
            "unmasked": list(self.unmasked),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "OracleRequest":
        return cls(
            image=payload["image"],
            height=int(payload["height"]),
            width=int(payload["width"]),
            channels=int(payload["channels"]),
            patch_size=int(payload["patch_size"]),
            unmasked=tuple(int(i) for i in payload["unmasked"]),
        )

    def decode_image(self) -> np.ndarray:
        return decode_image(self.image, self.height, self.width, self.channels)

    @property
    def n_patches(self) -> int:
        return (self.height // self.patch_size) * (self.width // self.patch_size)


@dataclass(frozen=True)
class OracleResponse:
    masked_mse: float
    full_mse: float
    per_patch_mse: tuple[float, ...]
    model_id: str

    @classmethod
    def from_payload(cls, payload: dict, n_patches: int | None = None) -> "OracleResponse":
        try:
            resp = cls(
                masked_mse=float(payload["masked_mse"]),
                full_mse=float(payload["full_mse"]),
                per_patch_mse=tuple(float(x) for x in payload["per_patch_mse"]),
                model_id=str(payload["model_id"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise OracleProtocolError(f"malformed reconstruction response: {exc}") from exc
        if resp.masked_mse < 0 or resp.full_mse < 0 or any(x < 0 for x in resp.per_patch_mse):
            raise OracleProtocolError("reconstruction losses must be nonnegative")
        if n_patches is not None and len(resp.per_patch_mse) != n_patches:
            raise OracleProtocolError(
                f"per_patch_mse holds {len(resp.per_patch_mse)} entries, expected {n_patches}"
            )
        return resp


def _raise_envelope(payload: dict, status: int) -> None:
    if isinstance(payload, dict) and "code" in payload and "message" in payload:
        raise OracleServerError(str(payload["code"]), str(payload["message"]))
    raise OracleProtocolError(f"server returned HTTP {status} without an error envelope")


class RemoteOracleClient:
    """Thin HTTP client with bounded idempotent retries on timeouts."""

    def __init__(
        self,
        base_url: str | None = None,
        timeout: float = DEFAULT_TIMEOUT,
        retries: int = DEFAULT_RETRIES,
    ):
        url = base_url or os.environ.get(ENV_URL)
        if not url:
            raise ValueError(f"no oracle url given and {ENV_URL} is unset")
        self.base_url = url.rstrip("/")
        self.timeout = timeout
        self.retries = retries

    def health(self) -> dict:
        try:
            r = requests.get(self.base_url + HEALTH_PATH, timeout=self.timeout)
        except requests.Timeout as exc:
            raise OracleConnectionError(f"health check timed out: {exc}") from exc
        except requests.ConnectionError as exc:
            raise OracleConnectionError(f"cannot reach oracle server: {exc}") from exc
        if r.status_code != 200:
            _raise_envelope(_json_or_protocol_error(r), r.status_code)
        payload = _json_or_protocol_error(r)
        for key in ("model_id", "patch_size", "image_side"):
            if key not in payload:
                raise OracleProtocolError(f"health response missing {key!r}")
        return payload

    def reconstruct_remote(self, req: OracleRequest) -> OracleResponse:
        last_timeout: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                r = requests.post(
                    self.base_url + RECONSTRUCT_PATH,
                    json=req.to_payload(),
                    timeout=self.timeout,
                )
            except requests.Timeout as exc:
                last_timeout = exc
                continue
            except requests.ConnectionError as exc:
                raise OracleConnectionError(f"cannot reach oracle server: {exc}") from exc
            if r.status_code != 200:
                _raise_envelope(_json_or_protocol_error(r), r.status_code)
            return OracleResponse.from_payload(_json_or_protocol_error(r), req.n_patches)
        raise OracleConnectionError(
            f"reconstruction timed out after {self.retries + 1} attempts: {last_timeout}"
        )


def _json_or_protocol_error(r: requests.Response) -> dict:
    try:
        return r.json()
    except ValueError as exc:
        raise OracleProtocolError(f"response body is not JSON: {exc}") from exc


class RemoteOracle:
    """OracleInterface adapter over the wire protocol.

    Not pass-through: the remote model reconstructs every patch through its
    decoder, and only losses travel back, so reconstructions carry per-patch
    errors without an image.
    """

    pass_through = False

    def __init__(
        self,
        client: RemoteOracleClient,
        spec: GridSpec,
        max_inflight: int = DEFAULT_MAX_INFLIGHT,
    ):
        self.client = client
        self.spec = spec
        self.max_inflight = max_inflight
        info = client.health()
        if int(info["patch_size"]) != spec.patch_side or int(info["image_side"]) != spec.image_side:
            raise GeometryMismatchError(
                f"server geometry (patch {info['patch_size']}, side {info['image_side']}) "
                f"does not match local grid (patch {spec.patch_side}, side {spec.image_side})"
            )
        self.model_id = str(info["model_id"])
        self.oracle_id = f"remote:{self.model_id}"

    def reconstruct(self, patches: np.ndarray, unmasked: PatchSet) -> Reconstruction:
        spec = spec_for_patches(patches)
        if spec != self.spec:
            raise GeometryError(f"patch array grid {spec} does not match client grid {self.spec}")
        image = assemble(patches, spec)
        req = OracleRequest.from_tensor(image, spec.patch_side, unmasked.indices)
        resp = self.client.reconstruct_remote(req)
        return Reconstruction(
            image=None, per_patch_sq_err=np.array(resp.per_patch_mse, dtype=np.float64)
        )
