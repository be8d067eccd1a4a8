"""Grid-foveation HTTP service: upload once, hover across 144 fixations.

POST /api/v1/foveate accepts an image and computes a grid_n x grid_n set
of foveated tiles asynchronously on a bounded worker pool. Jobs are
content-addressed: identical (source, backend, grid_n, fovea_radius)
uploads map to one job, concurrent duplicates share a single computation,
and tiles persist as individual PNGs plus a manifest JSON per job, so the
store survives restarts. Tile responses carry strong ETags and immutable
cache headers; repeated GETs return identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, File, Query, Request, Response, UploadFile
from fastapi.responses import JSONResponse

from . import fgn as fgn_mod
from . import radialblur
from .errors import MalformedInput
from .imagekit import Fixation, Image, decode_png, encode_png

logger = logging.getLogger("fovsim.service")

DEFAULT_GRID_N = 12
MAX_UPLOAD_BYTES = 16 * 1024 * 1024
MAX_DIMENSION = 2048
BACKENDS = ("blur", "fgn")


def grid_fixation(gx: int, gy: int, width: int, height: int, grid_n: int) -> tuple[int, int]:
    """Pixel fixation for a grid cell: cell centers, rounded to nearest pixel."""
    fx = int(round((gx + 0.5) * width / grid_n))
    fy = int(round((gy + 0.5) * height / grid_n))
    return min(fx, width - 1), min(fy, height - 1)


def default_fovea_radius(width: int) -> float:
    return width / 8.0


@dataclass
class ServiceConfig:
    storage_dir: str | Path = "fovsim_jobs"
    checkpoint_path: str | Path | None = None
    workers: int = 2
    max_upload_bytes: int = MAX_UPLOAD_BYTES
    max_dimension: int = MAX_DIMENSION
    static_dir: str | Path | None = None  # optional viewer bundle to host at /


@dataclass
class JobRecord:
    job_id: str
    backend: str
    grid_n: int
    fovea_radius: float
    source_hash: str
    width: int
    height: int
    status: str = "pending"  # pending | done | error
    error: str | None = None
    tiles: dict = field(default_factory=dict)  # "gx,gy" -> tile content hash

    @property
    def total_tiles(self) -> int:
        return self.grid_n * self.grid_n

    def to_doc(self) -> dict:
        return {
            "job_id": self.job_id, "backend": self.backend, "grid_n": self.grid_n,
            "fovea_radius": self.fovea_radius, "source_hash": self.source_hash,
            "width": self.width, "height": self.height, "status": self.status,
            "error": self.error, "tiles": self.tiles,
        }

    @staticmethod
    def from_doc(doc: dict) -> "JobRecord":
        return JobRecord(**doc)


class JobStore:
    """Disk-backed job registry with single-flight creation semantics."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.root = Path(config.storage_dir)
        (self.root / "jobs").mkdir(parents=True, exist_ok=True)
        (self.root / "tiles").mkdir(parents=True, exist_ok=True)
        (self.root / "sources").mkdir(parents=True, exist_ok=True)
        self.lock = threading.Lock()
        self.jobs: dict[str, JobRecord] = {}
        self.executor = ThreadPoolExecutor(max_workers=config.workers)
        self._params = None
        self._params_lock = threading.Lock()
        for path in sorted((self.root / "jobs").glob("*.json")):
            job = JobRecord.from_doc(json.loads(path.read_text()))
            self.jobs[job.job_id] = job
        # resume jobs interrupted before completion
        for job in self.jobs.values():
            if job.status == "pending":
                self._enqueue_missing(job)

    # -- persistence --------------------------------------------------------

    def _persist(self, job: JobRecord) -> None:
        path = self.root / "jobs" / f"{job.job_id}.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(job.to_doc(), sort_keys=True))
        tmp.replace(path)

    def tile_path(self, tile_hash: str) -> Path:
        return self.root / "tiles" / f"{tile_hash}.png"

    def source_path(self, source_hash: str) -> Path:
        return self.root / "sources" / f"{source_hash}.png"

    # -- job lifecycle ------------------------------------------------------

    @staticmethod
    def job_key(source_hash: str, backend: str, grid_n: int, fovea_radius: float) -> str:
        key = f"{source_hash}|{backend}|{grid_n}|{fovea_radius:.6g}"
        return hashlib.sha256(key.encode()).hexdigest()[:24]

    def get_or_create(
        self, png_bytes: bytes, img: Image, backend: str, grid_n: int, fovea_radius: float
    ) -> JobRecord:
        source_hash = hashlib.sha256(png_bytes).hexdigest()[:24]
        job_id = self.job_key(source_hash, backend, grid_n, fovea_radius)
        with self.lock:
            existing = self.jobs.get(job_id)
            if existing is not None:
                return existing
            job = JobRecord(
                job_id=job_id, backend=backend, grid_n=grid_n,
                fovea_radius=fovea_radius, source_hash=source_hash,
                width=img.width, height=img.height,
            )
            self.jobs[job_id] = job
            src = self.source_path(source_hash)
            if not src.exists():
                src.write_bytes(png_bytes)
            self._persist(job)
        self._enqueue_missing(job)
        return job

    def _enqueue_missing(self, job: JobRecord) -> None:
        for gy in range(job.grid_n):
            for gx in range(job.grid_n):
                if f"{gx},{gy}" not in job.tiles:
                    self.executor.submit(self._compute_tile, job.job_id, gx, gy)

    def _load_params(self):
        with self._params_lock:
            if self._params is None:
                if self.config.checkpoint_path is None:
                    raise RuntimeError("fgn backend requested but no checkpoint configured")
                self._params = fgn_mod.load_checkpoint(Path(self.config.checkpoint_path).read_bytes())
            return self._params

    def _compute_tile(self, job_id: str, gx: int, gy: int) -> None:
        job = self.jobs[job_id]
        try:
            src = decode_png(self.source_path(job.source_hash).read_bytes())
            fx, fy = grid_fixation(gx, gy, job.width, job.height, job.grid_n)
            fix = Fixation(fx=float(fx), fy=float(fy), fovea_radius=job.fovea_radius)
            if job.backend == "blur":
                out = radialblur.radial_blur(src, fix, approx=True)
            else:
                out = fgn_mod.foveate_image(self._load_params(), src, fix)
            data = encode_png(out)
            tile_hash = hashlib.sha256(data).hexdigest()[:24]
            path = self.tile_path(tile_hash)
            if not path.exists():
                tmp = path.with_suffix(".tmp")
                tmp.write_bytes(data)
                tmp.replace(path)
            with self.lock:
                job.tiles[f"{gx},{gy}"] = tile_hash
                if len(job.tiles) == job.total_tiles:
                    job.status = "done"
                self._persist(job)
        except Exception as exc:  # defensive: job must reach a terminal state
            logger.exception("tile (%d, %d) of job %s failed", gx, gy, job_id)
            with self.lock:
                job.status = "error"
                job.error = str(exc)
                self._persist(job)


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    app = FastAPI(title="fovsim foveation service")
    store = JobStore(config)
    app.state.store = store

    @app.middleware("http")
    async def log_requests(request: Request, call_next):
        response = await call_next(request)
        logger.info("%s %s -> %d", request.method, request.url.path, response.status_code)
        return response

    def error(status: int, message: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={"error": message})

    @app.post("/api/v1/foveate", status_code=202)
    async def foveate(
        image: UploadFile = File(...),
        backend: str = Query("fgn"),
        grid_n: int = Query(DEFAULT_GRID_N),
        fovea_radius: float | None = Query(None),
    ):
        if backend not in BACKENDS:
            return error(422, f"backend must be one of {BACKENDS}")
        if not (1 <= grid_n <= 64):
            return error(422, "grid_n must be in [1, 64]")
        if fovea_radius is not None and fovea_radius < 0:
            return error(422, "fovea_radius must be >= 0")
        if backend == "fgn" and config.checkpoint_path is None:
            return error(422, "fgn backend is not configured with a checkpoint")
        data = await image.read()
        if len(data) > config.max_upload_bytes:
            return error(413, f"upload exceeds {config.max_upload_bytes} bytes")
        try:
            img = decode_png(data)
        except MalformedInput:
            return error(415, "upload is not a decodable PNG")
        if max(img.width, img.height) > config.max_dimension:
            return error(413, f"image dimension exceeds {config.max_dimension}")
        fr = default_fovea_radius(img.width) if fovea_radius is None else fovea_radius
        job = store.get_or_create(data, img, backend, grid_n, fr)
        return JSONResponse(status_code=202, content={
            "job_id": job.job_id,
            "grid_n": job.grid_n,
            "status_url": f"/api/v1/jobs/{job.job_id}",
        })

    @app.get("/api/v1/jobs/{job_id}")
    def job_status(job_id: str):
        job = store.jobs.get(job_id)
        if job is None:
            return error(404, "unknown job")
        return {
            "status": job.status,
            "completed_tiles": len(job.tiles),
            "total_tiles": job.total_tiles,
            "error": job.error,
        }

    @app.get("/api/v1/jobs/{job_id}/tile/{gx}/{gy}")
    def tile(job_id: str, gx: int, gy: int, request: Request):
        job = store.jobs.get(job_id)
        if job is None:
            return error(404, "unknown job")
        if not (0 <= gx < job.grid_n and 0 <= gy < job.grid_n):
            return error(404, "tile out of range")
        if job.status != "done":
            return error(409, f"job is {job.status}, not done")
        tile_hash = job.tiles[f"{gx},{gy}"]
        etag = f'"{tile_hash}"'
        if request.headers.get("if-none-match") == etag:
            return Response(status_code=304)
        return Response(
            content=store.tile_path(tile_hash).read_bytes(),
            media_type="image/png",
            headers={
                "ETag": etag,
                "Cache-Control": "public, max-age=31536000, immutable",
            },
        )

    if config.static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(config.static_dir), html=True), name="ui")

    return app
