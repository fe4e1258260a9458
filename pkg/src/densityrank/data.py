"""Dataset ingestion, synthesis, transformation, and image I/O.

Images carry two synchronized views: a float view in [0, 1] and an 8-bit
quantized view. All randomized operations take explicit seeds and are
deterministic.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

CIFAR_RECORD_BYTES = 3073  # 1 label byte + 32*32*3 channel-planar pixel bytes
CIFAR_SIDE = 32

# ITU-R BT.601 luma weights
_GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


class DataError(ValueError):
    """Malformed input data (bad file, bad shape, bad parameters)."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Image:
    """A single image with float and quantized pixel views.

    pixels_f: float64 array of shape (height, width, channels), values in [0, 1].
    pixels_q: uint8 array of the same shape, pixels_q = round(pixels_f * 255).
    """

    width: int
    height: int
    channels: int
    pixels_f: np.ndarray
    pixels_q: np.ndarray

    def __post_init__(self):
        shape = (self.height, self.width, self.channels)
        if self.pixels_f.shape != shape or self.pixels_q.shape != shape:
            raise DataError(f"pixel arrays must have shape {shape}")
        if self.channels not in (1, 3):
            raise DataError("channels must be 1 or 3")

    @classmethod
    def from_float(cls, pixels: np.ndarray) -> "Image":
        pixels = np.asarray(pixels, dtype=np.float64)
        if pixels.ndim == 2:
            pixels = pixels[:, :, None]
        if pixels.min() < 0.0 or pixels.max() > 1.0:
            raise DataError("float pixels must lie in [0, 1]")
        q = np.rint(pixels * 255.0).astype(np.uint8)
        h, w, c = pixels.shape
        return cls(w, h, c, _freeze(pixels.copy()), _freeze(q))

    @classmethod
    def from_quantized(cls, pixels: np.ndarray) -> "Image":
        pixels = np.asarray(pixels, dtype=np.uint8)
        if pixels.ndim == 2:
            pixels = pixels[:, :, None]
        f = pixels.astype(np.float64) / 255.0
        h, w, c = pixels.shape
        return cls(w, h, c, _freeze(f), _freeze(pixels.copy()))

    def flat_f(self) -> np.ndarray:
        """Float pixels flattened row-major, length width*height*channels."""
        return self.pixels_f.reshape(-1)

    def flat_q(self) -> np.ndarray:
        return self.pixels_q.reshape(-1)


@dataclass(frozen=True)
class Dataset:
    images: tuple
    ids: tuple
    name: str = "dataset"
    meta: tuple = field(default=())  # one dict per image (labels, tiers, ...)

    def __post_init__(self):
        if len(self.ids) != len(self.images):
            raise DataError("ids and images must have equal length")
        if len(set(self.ids)) != len(self.ids):
            raise DataError("ids must be unique")
        if self.images:
            w, h, c = self.images[0].width, self.images[0].height, self.images[0].channels
            for img in self.images:
                if (img.width, img.height, img.channels) != (w, h, c):
                    raise DataError("all images must share width/height/channels")
        if self.meta and len(self.meta) != len(self.images):
            raise DataError("meta must be empty or one entry per image")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def image_shape(self):
        img = self.images[0]
        return (img.height, img.width, img.channels)

    @property
    def dim(self) -> int:
        h, w, c = self.image_shape
        return h * w * c

    def subset(self, ids, name=None) -> "Dataset":
        """Restrict to the given ids, preserving this dataset's id order."""
        wanted = set(ids)
        keep = [i for i, id_ in enumerate(self.ids) if id_ in wanted]
        missing = wanted - {self.ids[i] for i in keep}
        if missing:
            raise DataError(f"unknown ids: {sorted(missing)}")
        return Dataset(
            images=tuple(self.images[i] for i in keep),
            ids=tuple(self.ids[i] for i in keep),
            name=name or self.name,
            meta=tuple(self.meta[i] for i in keep) if self.meta else (),
        )

    def image_by_id(self, id_) -> Image:
        return self.images[self.ids.index(id_)]


@dataclass(frozen=True)
class NoiseSpec:
    variance: float
    seed: int = 0

    def __post_init__(self):
        if self.variance < 0:
            raise DataError("noise variance must be >= 0")


def load_cifar10_binary(path, split: str = "train") -> Dataset:
    """Load CIFAR-10 from the standard binary batch format.

    `path` may be a directory holding the standard batch files
    (data_batch_1.bin .. data_batch_5.bin / test_batch.bin) or a single
    .bin file. Records are 3073 bytes: label byte then 3072 channel-planar
    pixel bytes (R plane, G plane, B plane).
    """
    if split not in ("train", "test"):
        raise DataError(f"split must be 'train' or 'test', got {split!r}")
    if os.path.isdir(path):
        names = (
            [f"data_batch_{i}.bin" for i in range(1, 6)]
            if split == "train"
            else ["test_batch.bin"]
        )
        files = [os.path.join(path, n) for n in names]
        for f in files:
            if not os.path.isfile(f):
                raise DataError(f"missing CIFAR-10 batch file: {f}")
    else:
        if not os.path.isfile(path):
            raise DataError(f"no such file: {path}")
        files = [path]

    images, ids, meta = [], [], []
    record = 0
    for f in files:
        raw = np.fromfile(f, dtype=np.uint8)
        if raw.size == 0 or raw.size % CIFAR_RECORD_BYTES != 0:
            raise DataError(
                f"record count mismatch in {f}: {raw.size} bytes is not a "
                f"multiple of {CIFAR_RECORD_BYTES}"
            )
        raw = raw.reshape(-1, CIFAR_RECORD_BYTES)
        labels = raw[:, 0]
        pixels = raw[:, 1:].reshape(-1, 3, CIFAR_SIDE, CIFAR_SIDE)
        pixels = np.transpose(pixels, (0, 2, 3, 1))  # -> (n, h, w, c)
        for i in range(raw.shape[0]):
            images.append(Image.from_quantized(pixels[i]))
            ids.append(record)
            meta.append({"label": int(labels[i])})
            record += 1
    return Dataset(tuple(images), tuple(ids), name=f"cifar10-{split}", meta=tuple(meta))


def synth_complexity_graded(seed: int, n: int, side: int, levels: int,
                            contrast: float = 3.0) -> Dataset:
    """Grayscale dataset partitioned into complexity tiers.

    Tier k holds band-limited Gaussian noise whose maximum spatial frequency
    grows with k: tier 1 is smooth low-frequency structure, tier `levels`
    spans the full band. Inside the passband the spectrum carries a
    natural-image-like 1/f amplitude rolloff. Fields are scaled by their own
    standard deviation (`contrast` sigmas mapped to the half range) and clipped to
    [0, 1], so per-pixel marginals are tier-independent and only spatial
    structure varies. Tier index (1-based) is recorded in per-image metadata.
    """
    if levels < 2:
        raise DataError("levels must be >= 2")
    if n < levels:
        raise DataError("n must be >= levels")
    rng = np.random.default_rng(seed)
    base, extra = divmod(n, levels)
    counts = [base + (1 if k < extra else 0) for k in range(levels)]

    fy = np.fft.fftfreq(side)[:, None]
    fx = np.fft.rfftfreq(side)[None, :]
    radius = np.sqrt(fy**2 + fx**2)  # cycles per pixel, max ~0.707
    rolloff = 1.0 / (radius + 1.0 / side)  # 1/f amplitude inside the passband

    images, ids, meta = [], [], []
    idx = 0
    for tier in range(1, levels + 1):
        cutoff = 0.5 * tier / levels + 1e-9
        mask = (radius <= cutoff) * rolloff
        for _ in range(counts[tier - 1]):
            noise = rng.standard_normal((side, side))
            spec = np.fft.rfft2(noise) * mask
            img = np.fft.irfft2(spec, s=(side, side))
            std = img.std()
            if std < 1e-12:
                img = np.full_like(img, 0.5)
            else:
                img = np.clip(0.5 + (img - img.mean()) * (0.5 / (contrast * std)), 0.0, 1.0)
            images.append(Image.from_float(img))
            ids.append(idx)
            meta.append({"tier": tier})
            idx += 1
    return Dataset(tuple(images), tuple(ids), name=f"synth-graded-{levels}", meta=tuple(meta))


def to_grayscale(img: Image) -> Image:
    """Convert to 1 channel using BT.601 weights; 1-channel input passes through."""
    if img.channels == 1:
        return img
    gray = img.pixels_f @ _GRAY_WEIGHTS
    return Image.from_float(np.clip(gray, 0.0, 1.0))


def add_gaussian_noise(ds: Dataset, spec: NoiseSpec) -> Dataset:
    """Add i.i.d. N(0, variance) to every float pixel, clamp to [0, 1]."""
    if spec.variance == 0.0:
        return ds
    rng = np.random.default_rng(spec.seed)
    sigma = np.sqrt(spec.variance)
    images = []
    for img in ds.images:
        noisy = img.pixels_f + rng.normal(0.0, sigma, size=img.pixels_f.shape)
        images.append(Image.from_float(np.clip(noisy, 0.0, 1.0)))
    return Dataset(tuple(images), ds.ids, name=f"{ds.name}+noise", meta=ds.meta)


def pixel_variance(ds: Dataset):
    """Population variance of float pixels: (per-channel array, pooled scalar)."""
    if len(ds) == 0:
        raise DataError("pixel_variance of empty dataset")
    stack = np.stack([img.pixels_f for img in ds.images])  # (n, h, w, c)
    per_channel = stack.reshape(-1, stack.shape[-1]).var(axis=0)
    pooled = float(stack.var())
    return per_channel, pooled


def dequantize(ds: Dataset, seed: int) -> np.ndarray:
    """Continuous view for density training/evaluation: q/255 + U[0, 1/256).

    Returns an (n, D) float64 array of flattened images; deterministic in seed.
    """
    rng = np.random.default_rng(seed)
    n, d = len(ds), ds.dim
    out = np.empty((n, d))
    for i, img in enumerate(ds.images):
        out[i] = img.flat_q() / 255.0 + rng.uniform(0.0, 1.0 / 256.0, size=d)
    return out


def save_ppm(img: Image, path) -> None:
    """Write binary PPM: P6 for 3 channels, P5 for grayscale."""
    magic = b"P6" if img.channels == 3 else b"P5"
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (img.width, img.height))
        fh.write(img.pixels_q.tobytes())


def load_ppm(path) -> Image:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    # header = 4 whitespace-separated tokens, '#' comments allowed
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError(f"malformed PPM header in {path}")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise DataError(f"unsupported PPM magic {magic!r}")
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as e:
        raise DataError(f"malformed PPM header in {path}") from e
    if maxval != 255:
        raise DataError("only maxval 255 supported")
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    payload = data[pos : pos + need]
    if len(payload) != need:
        raise DataError(f"truncated PPM payload: need {need} bytes, have {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return Image.from_quantized(pixels)
