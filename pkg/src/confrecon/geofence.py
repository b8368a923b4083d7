"""Spatial CRA maps and the geofencing contour.

Eve's per-slot success probability at a location comes from the UMi LOS/NLOS
path loss and Rayleigh fading, ``Pr[snr > snr_th] = exp(-snr_th / mean_snr)``.
The optimal policy is then solved independently at every grid cell.
"""
from __future__ import annotations

import hashlib
import json
import math
import struct
from importlib import resources
from dataclasses import asdict, dataclass, field

import numpy as np

from .model import ChannelPair, DomainError, SourceModel
from .optimizer import DEFAULT_P_MIN, optimize

SCENE_SCHEMA = "confrecon.scene/v1"
P_MIN, P_MAX = 1e-4, 1.0 - 1e-4
GRID_MAGIC = b"CRGRID1\x00"


@dataclass(frozen=True)
class Scene:
    """Planar layout; obstacles are ``(xmin, ymin, xmax, ymax)`` rectangles in meters."""

    bob_position: tuple[float, float]
    extent: tuple[float, float, float, float]  # xmin, xmax, ymin, ymax
    resolution: float
    tx_position: tuple[float, float] = (0.0, 0.0)
    obstacles: tuple[tuple[float, float, float, float], ...] = ()
    carrier_frequency: float = 3.5  # GHz
    snr_threshold: float = 1.0  # linear
    link_budget: float = 82.5  # dB, transmit power minus noise floor
    bob_success_override: float | None = None

    def __post_init__(self):
        xmin, xmax, ymin, ymax = self.extent
        if self.resolution <= 0 or xmax <= xmin or ymax <= ymin:
            raise DomainError("grid needs positive resolution and a nonempty extent")
        if self.carrier_frequency <= 0 or self.snr_threshold <= 0:
            raise DomainError("carrier frequency and SNR threshold must be positive")
        for rect in self.obstacles:
            if len(rect) != 4 or rect[2] <= rect[0] or rect[3] <= rect[1]:
                raise DomainError(f"degenerate obstacle {rect!r}")
        if self.bob_success_override is not None and not 0 < self.bob_success_override < 1:
            raise DomainError("bob_success_override must lie in (0, 1)")

    @property
    def shape(self) -> tuple[int, int]:
        xmin, xmax, ymin, ymax = self.extent
        return (
            int(round((ymax - ymin) / self.resolution)),
            int(round((xmax - xmin) / self.resolution)),
        )

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(xs, ys)``, the 1-D coordinates of cell centers."""
        ny, nx = self.shape
        xs = self.extent[0] + (np.arange(nx) + 0.5) * self.resolution
        ys = self.extent[2] + (np.arange(ny) + 0.5) * self.resolution
        return xs, ys

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema"] = SCENE_SCHEMA
        d["obstacles"] = [list(r) for r in self.obstacles]
        for key in ("bob_position", "extent", "tx_position"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "Scene":
        data = dict(data)
        schema = data.pop("schema", SCENE_SCHEMA)
        if schema != SCENE_SCHEMA:
            raise DomainError(f"unsupported scene schema {schema!r}")
        try:
            kwargs = {
                "bob_position": tuple(float(v) for v in data.pop("bob_position")),
                "extent": tuple(float(v) for v in data.pop("extent")),
                "resolution": float(data.pop("resolution")),
            }
            if "tx_position" in data:
                kwargs["tx_position"] = tuple(float(v) for v in data.pop("tx_position"))
            kwargs["obstacles"] = tuple(
                tuple(float(v) for v in r) for r in data.pop("obstacles", ())
            )
            for key in ("carrier_frequency", "snr_threshold", "link_budget"):
                if key in data:
                    kwargs[key] = float(data.pop(key))
            override = data.pop("bob_success_override", None)
            kwargs["bob_success_override"] = None if override is None else float(override)
        except (KeyError, TypeError, ValueError) as exc:
            raise DomainError(f"malformed scene: {exc}") from exc
        if data:
            raise DomainError(f"unknown scene fields: {sorted(data)}")
        if len(kwargs["bob_position"]) != 2 or len(kwargs["extent"]) != 4:
            raise DomainError("malformed scene: bad position or extent arity")
        return cls(**kwargs)

    @property
    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def load_scene(path) -> Scene:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DomainError(f"scene is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise DomainError("scene must be a JSON object")
    return Scene.from_dict(data)


def demo_scene() -> Scene:
    """Urban block layout used by the demo and the acceptance suite.

    Four corner blocks leave two crossing streets; the vertical street is
    capped beyond Bob, so the east-west street is the only long LOS corridor.
    Stored as ``data/demo_scene.json`` so it doubles as a scene-file example.
    """
    text = resources.files("confrecon").joinpath("data/demo_scene.json").read_text()
    return Scene.from_dict(json.loads(text))


def blocked(scene: Scene, xs, ys) -> np.ndarray:
    """True where the segment between the transmitter and (xs, ys) meets an obstacle.

    Endpoints are put in lexicographic order first, so the answer does not
    depend on the direction in which the segment is traversed.
    """
    xs, ys = np.broadcast_arrays(np.asarray(xs, float), np.asarray(ys, float))
    tx, ty = scene.tx_position
    swap = (xs < tx) | ((xs == tx) & (ys < ty))
    x0 = np.where(swap, xs, tx)
    y0 = np.where(swap, ys, ty)
    dx = np.where(swap, tx - xs, xs - tx)
    dy = np.where(swap, ty - ys, ys - ty)
    hit = np.zeros(xs.shape, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for rxmin, rymin, rxmax, rymax in scene.obstacles:
            lo = np.zeros(xs.shape)
            hi = np.ones(xs.shape)
            ok = np.ones(xs.shape, dtype=bool)
            for start, delta, smin, smax in ((x0, dx, rxmin, rxmax), (y0, dy, rymin, rymax)):
                flat = delta == 0
                ok &= ~flat | ((start >= smin) & (start <= smax))
                t1 = (smin - start) / delta
                t2 = (smax - start) / delta
                lo = np.where(flat, lo, np.maximum(lo, np.minimum(t1, t2)))
                hi = np.where(flat, hi, np.minimum(hi, np.maximum(t1, t2)))
            hit |= ok & (lo <= hi)
    return hit


def _distance(scene, xs, ys, half_cell=True):
    d = np.hypot(np.asarray(xs, float) - scene.tx_position[0], np.asarray(ys, float) - scene.tx_position[1])
    if half_cell:
        d = np.where(d == 0.0, 0.5 * scene.resolution, d)
    return d


def umi_path_loss(d, f_c, nlos):
    """UMi path loss in dB for distance ``d`` in meters and ``f_c`` in GHz."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise DomainError("path loss is singular at zero distance")
    los = 22.0 + 28.0 * np.log10(d) + 20.0 * math.log10(f_c)
    shadow = 22.7 + 36.7 * np.log10(d) + 26.0 * math.log10(f_c)
    return np.where(nlos, shadow, los)


def path_loss(scene: Scene, point) -> float:
    x, y = point
    d = float(_distance(scene, x, y, half_cell=False))
    if d == 0.0:
        raise DomainError("point coincides with the transmitter")
    return float(umi_path_loss(d, scene.carrier_frequency, blocked(scene, x, y)))


def rayleigh_success(scene: Scene, loss_db, clip=True):
    mean_snr = 10.0 ** ((scene.link_budget - np.asarray(loss_db, float)) / 10.0)
    prob = np.exp(-scene.snr_threshold / mean_snr)
    return np.clip(prob, P_MIN, P_MAX) if clip else prob


def success_probability(scene: Scene, point) -> float:
    return float(rayleigh_success(scene, path_loss(scene, point)))


def bob_success(scene: Scene) -> float:
    if scene.bob_success_override is not None:
        return scene.bob_success_override
    return success_probability(scene, scene.bob_position)


@dataclass(frozen=True)
class SpatialMap:
    values: np.ndarray  # shape (ny, nx), row k at ys[k]
    quantity: str
    units: str
    extent: tuple[float, float, float, float]
    resolution: float
    scene_hash: str = ""

    def coordinates(self):
        ny, nx = self.values.shape
        xs = self.extent[0] + (np.arange(nx) + 0.5) * self.resolution
        ys = self.extent[2] + (np.arange(ny) + 0.5) * self.resolution
        return xs, ys

    def validate(self) -> None:
        if not np.isfinite(self.values).all():
            holes = int((~np.isfinite(self.values)).sum())
            raise ArithmeticError(f"{self.quantity} map has {holes} failed cells")

    def csv_text(self) -> str:
        xs, ys = self.coordinates()
        lines = ["x,y,value"]
        for k, y in enumerate(ys):
            lines.extend(f"{x:.17g},{y:.17g},{v:.17g}" for x, v in zip(xs, self.values[k]))
        return "\n".join(lines) + "\n"

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())

    def to_bytes(self) -> bytes:
        name = self.quantity.encode()
        ny, nx = self.values.shape
        header = GRID_MAGIC + struct.pack("<II4dd", nx, ny, *self.extent, self.resolution)
        header += struct.pack("<H", len(name)) + name
        return header + np.ascontiguousarray(self.values, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes, units: str = "") -> "SpatialMap":
        if blob[:8] != GRID_MAGIC:
            raise ValueError("not a confrecon grid file")
        nx, ny, *rest = struct.unpack_from("<II4dd", blob, 8)
        extent, resolution = tuple(rest[:4]), rest[4]
        off = 8 + struct.calcsize("<II4dd")
        (n,) = struct.unpack_from("<H", blob, off)
        name = blob[off + 2: off + 2 + n].decode()
        values = np.frombuffer(blob, dtype="<f8", offset=off + 2 + n).reshape(ny, nx)
        return cls(values.copy(), name, units, extent, resolution)


def eve_success_grid(scene: Scene) -> np.ndarray:
    xs, ys = scene.cell_centers()
    gx, gy = np.meshgrid(xs, ys)
    loss = umi_path_loss(_distance(scene, gx, gy), scene.carrier_frequency, blocked(scene, gx, gy))
    return rayleigh_success(scene, loss)


def build_maps(scene: Scene, src: SourceModel, interval=(DEFAULT_P_MIN, 1.0)):
    """Return ``(cra_map, p_alpha_map, eve_success_map)``; failed cells hold NaN."""
    p_s = bob_success(scene)
    eve = eve_success_grid(scene)
    cra = np.full(eve.shape, np.nan)
    pa = np.full(eve.shape, np.nan)
    cache = {}
    for idx, pe in np.ndenumerate(eve):
        hit = cache.get(pe)
        if hit is None:
            try:
                res = optimize(src, ChannelPair(p_s, pe), interval)
                hit = (res.value, res.p_alpha_star)
            except (ArithmeticError, ValueError, AssertionError):
                hit = (math.nan, math.nan)
            cache[pe] = hit
        cra[idx], pa[idx] = hit
    meta = dict(extent=scene.extent, resolution=scene.resolution, scene_hash=scene.digest)
    return (
        SpatialMap(cra, "optimal_cra", "probability", **meta),
        SpatialMap(pa, "optimal_p_alpha", "probability", **meta),
        SpatialMap(eve, "eve_success", "probability", **meta),
    )


@dataclass(frozen=True)
class GeofenceContour:
    threshold: float
    polylines: list = field(default_factory=list)  # (n, 2) arrays in scene coordinates
    closed: list = field(default_factory=list)
    inside_mask: np.ndarray | None = None

    def to_geojson(self) -> dict:
        features = [
            {
                "type": "Feature",
                "properties": {"threshold": self.threshold, "closed": bool(c)},
                "geometry": {"type": "LineString", "coordinates": line.tolist()},
            }
            for line, c in zip(self.polylines, self.closed)
        ]
        return {
            "type": "FeatureCollection",
            "properties": {"threshold": self.threshold, "level_semantics": "inside: value < threshold"},
            "features": features,
        }


# Marching squares. Corner bits: 1 = (r, c), 2 = (r, c+1), 4 = (r+1, c+1), 8 = (r+1, c).
# Edges: 0 bottom (r; c..c+1), 1 right (c+1; r..r+1), 2 top (r+1; c..c+1), 3 left (c; r..r+1).
_SEGMENTS = {
    0: (), 15: (),
    1: ((3, 0),), 14: ((3, 0),),
    2: ((0, 1),), 13: ((0, 1),),
    3: ((3, 1),), 12: ((3, 1),),
    4: ((1, 2),), 11: ((1, 2),),
    6: ((0, 2),), 9: ((0, 2),),
    7: ((3, 2),), 8: ((3, 2),),
}


def _edge_key(r, c, e):
    if e == 0:
        return ("h", r, c)
    if e == 1:
        return ("v", r, c + 1)
    if e == 2:
        return ("h", r + 1, c)
    return ("v", r, c)


def extract_contour(smap: SpatialMap, threshold: float) -> GeofenceContour:
    if not 0.0 < threshold < 1.0:
        raise DomainError("threshold must lie in (0, 1)")
    values = smap.values
    inside = values < threshold
    xs, ys = smap.coordinates()
    ny, nx = values.shape

    def point(key):
        kind, r, c = key
        r2, c2 = (r, c + 1) if kind == "h" else (r + 1, c)
        v0, v1 = values[r, c], values[r2, c2]
        t = (threshold - v0) / (v1 - v0)
        return (xs[c] + t * (xs[c2] - xs[c]), ys[r] + t * (ys[r2] - ys[r]))

    segments = []
    for r in range(ny - 1):
        for c in range(nx - 1):
            code = (
                inside[r, c] * 1 + inside[r, c + 1] * 2
                + inside[r + 1, c + 1] * 4 + inside[r + 1, c] * 8
            )
            if code in (5, 10):
                center_in = values[r:r + 2, c:c + 2].mean() < threshold
                # connect around the outside corners when the center is inside
                if (code == 5) == center_in:
                    pairs = ((3, 2), (0, 1))
                else:
                    pairs = ((3, 0), (1, 2))
            else:
                pairs = _SEGMENTS[code]
            for e0, e1 in pairs:
                segments.append((_edge_key(r, c, e0), _edge_key(r, c, e1)))

    adjacency: dict = {}
    for k, (a, b) in enumerate(segments):
        adjacency.setdefault(a, []).append(k)
        adjacency.setdefault(b, []).append(k)
    used = [False] * len(segments)

    def walk(start_seg, start_key):
        keys = [start_key]
        seg, key = start_seg, start_key
        while True:
            used[seg] = True
            a, b = segments[seg]
            key = b if a == key else a
            keys.append(key)
            nxt = [s for s in adjacency[key] if not used[s]]
            if not nxt:
                return keys
            seg = nxt[0]

    polylines, closed = [], []
    # open chains start at edge points touched by a single segment
    starts = [k for k, segs in adjacency.items() if len(segs) == 1]
    for key in starts:
        seg = adjacency[key][0]
        if not used[seg]:
            keys = walk(seg, key)
            polylines.append(np.array([point(k) for k in keys]))
            closed.append(False)
    for seg in range(len(segments)):
        if not used[seg]:
            keys = walk(seg, segments[seg][0])
            polylines.append(np.array([point(k) for k in keys]))
            closed.append(keys[0] == keys[-1])
    return GeofenceContour(float(threshold), polylines, closed, inside)
