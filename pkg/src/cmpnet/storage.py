"""Binary persistence for grids, datasets, and model checkpoints.

Two little-endian formats cover everything the pipeline writes:

CMPG (single grid)
    magic "CMPG", version u32, height u32, width u32, pitch_nm f64,
    dtype u8 (0 = f32, 1 = u8), then the row-major payload.

CMPW (model checkpoint)
    magic "CMPW", version u32, architecture block (depth u32,
    base_channels u32, kernel u32, frame_size u32), normalization
    min/max f64, epoch u32, parameter count u32, then one record per
    parameter (name length u16, utf-8 name, ndim u8, dims u32 each,
    f32 payload), then an Adam flag u8; when set, step counter u64
    followed by first- and second-moment f32 payloads per parameter in
    the same order.

A dataset is a directory: a manifest.txt of key=value lines plus one
CMPG pair per sample, sample_<index>_<aug>_in.cmpg (u8, the binary
layout frame) and ..._out.cmpg (f32, the normalized target frame).

All round-trips are bit-exact, and every reader consumes exactly the
declared byte counts, so the formats are safe to embed in streams.
"""

import os
import struct

import numpy as np

from .layout import Grid2D
from .preprocess import (RNG_NAME, NUM_DIHEDRAL, DataError, DataSet,
                         NormStats, Sample, SmoothingConfig)
from .unet import ModelState, UNetConfig, param_shapes
from .training import AdamState

GRID_MAGIC = b"CMPG"
GRID_VERSION = 1
CHECKPOINT_MAGIC = b"CMPW"
CHECKPOINT_VERSION = 1

DTYPE_F32 = 0
DTYPE_U8 = 1


class GridFormatError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


def _write_to(destination, writer):
    if hasattr(destination, "write"):
        writer(destination)
        return
    with open(destination, "wb") as fh:
        writer(fh)


def _read_from(source, reader):
    if hasattr(source, "read"):
        return reader(source)
    with open(source, "rb") as fh:
        return reader(fh)


def _read_exact(fh, count, error_cls, what):
    data = fh.read(count)
    if len(data) != count:
        raise error_cls(f"truncated {what}")
    return data


def write_grid(grid, destination, dtype="f32"):
    """Serialize a Grid2D; dtype "u8" packs a binary grid one byte per cell."""
    if dtype == "f32":
        code, payload = DTYPE_F32, grid.values.astype("<f4")
    elif dtype == "u8":
        if not grid.is_binary():
            raise GridFormatError("u8 dtype requires a binary grid")
        code, payload = DTYPE_U8, grid.values.astype(np.uint8)
    else:
        raise GridFormatError(f"unknown grid dtype {dtype!r}")
    height, width = grid.values.shape

    def writer(fh):
        fh.write(GRID_MAGIC)
        fh.write(struct.pack("<IIIdB", GRID_VERSION, height, width,
                             grid.pitch_nm, code))
        fh.write(payload.tobytes())

    _write_to(destination, writer)


def read_grid(source):
    def reader(fh):
        magic = _read_exact(fh, 4, GridFormatError, "header")
        if magic != GRID_MAGIC:
            raise GridFormatError("not a CMPG file")
        header = _read_exact(fh, 21, GridFormatError, "header")
        version, height, width, pitch_nm, code = struct.unpack("<IIIdB",
                                                               header)
        if version != GRID_VERSION:
            raise GridFormatError(f"unsupported CMPG version {version}")
        if code == DTYPE_F32:
            dt = np.dtype("<f4")
        elif code == DTYPE_U8:
            dt = np.dtype(np.uint8)
        else:
            raise GridFormatError(f"unknown grid dtype code {code}")
        payload = fh.read(height * width * dt.itemsize)
        if len(payload) != height * width * dt.itemsize:
            raise GridFormatError("truncated payload")
        values = np.frombuffer(payload, dtype=dt).reshape(height, width)
        return Grid2D(pitch_nm=pitch_nm, values=values.astype(np.float64))

    return _read_from(source, reader)


def _write_array(fh, array):
    fh.write(np.ascontiguousarray(array, dtype="<f4").tobytes())


def _read_array(fh, shape):
    count = int(np.prod(shape, dtype=np.int64))
    raw = _read_exact(fh, 4 * count, CheckpointError, "checkpoint")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()


def save_checkpoint(state, destination):
    names = list(state.params)

    def writer(fh):
        cfg = state.config
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IIIII", CHECKPOINT_VERSION, cfg.depth,
                             cfg.base_channels, cfg.kernel, cfg.frame_size))
        fh.write(struct.pack("<ddII", state.norm.min, state.norm.max,
                             state.epoch, len(names)))
        for name in names:
            encoded = name.encode("utf-8")
            array = state.params[name]
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", array.ndim))
            fh.write(struct.pack(f"<{array.ndim}I", *array.shape))
            _write_array(fh, array)
        if state.adam is None:
            fh.write(struct.pack("<B", 0))
            return
        fh.write(struct.pack("<BQ", 1, state.adam.t))
        for name in names:
            _write_array(fh, state.adam.m[name])
            _write_array(fh, state.adam.v[name])

    _write_to(destination, writer)


def load_checkpoint(source):
    def reader(fh):
        magic = _read_exact(fh, 4, CheckpointError, "header")
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError("not a CMPW file")
        header = _read_exact(fh, 20, CheckpointError, "header")
        version, depth, base, kernel, frame = struct.unpack("<IIIII", header)
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported CMPW version {version}")
        try:
            config = UNetConfig(depth=depth, base_channels=base,
                                kernel=kernel, frame_size=frame)
        except ValueError as exc:
            raise CheckpointError(f"invalid architecture config: {exc}")
        stats = _read_exact(fh, 24, CheckpointError, "header")
        norm_min, norm_max, epoch, count = struct.unpack("<ddII", stats)
        expected = param_shapes(config)
        if count != len(expected):
            raise CheckpointError(
                f"parameter shape mismatch: expected {len(expected)} "
                f"parameters, file has {count}")
        params = {}
        for _ in range(count):
            (name_len,) = struct.unpack(
                "<H", _read_exact(fh, 2, CheckpointError, "checkpoint"))
            name = _read_exact(fh, name_len, CheckpointError,
                               "checkpoint").decode("utf-8")
            (ndim,) = struct.unpack(
                "<B", _read_exact(fh, 1, CheckpointError, "checkpoint"))
            shape = struct.unpack(
                f"<{ndim}I",
                _read_exact(fh, 4 * ndim, CheckpointError, "checkpoint"))
            if name not in expected or expected[name] != shape:
                raise CheckpointError(
                    f"parameter shape mismatch for {name!r}: "
                    f"file has {shape}, config requires "
                    f"{expected.get(name)}")
            params[name] = _read_array(fh, shape)
        missing = [n for n in expected if n not in params]
        if missing:
            raise CheckpointError(
                f"parameter shape mismatch: missing {missing[0]!r}")
        state = ModelState(config=config, params=params,
                           norm=NormStats(norm_min, norm_max), epoch=epoch)
        (flag,) = struct.unpack(
            "<B", _read_exact(fh, 1, CheckpointError, "checkpoint"))
        if flag == 1:
            (t,) = struct.unpack(
                "<Q", _read_exact(fh, 8, CheckpointError, "checkpoint"))
            m = {}
            v = {}
            for name in params:
                m[name] = _read_array(fh, params[name].shape)
                v[name] = _read_array(fh, params[name].shape)
            state.adam = AdamState(t=t, m=m, v=v)
        elif flag != 0:
            raise CheckpointError(f"unknown optimizer flag {flag}")
        return state

    return _read_from(source, reader)


def _sample_stem(base_index, aug_id):
    return f"sample_{base_index:05d}_{aug_id}"


def save_dataset(dataset, directory):
    """Write a dataset directory: manifest.txt plus one CMPG pair per sample."""
    os.makedirs(directory, exist_ok=True)
    base_indices = sorted({s.base_index for s in dataset.samples})
    origins = {s.base_index: s.origin for s in dataset.samples}
    test_base = sorted({s.base_index for s in dataset.samples
                        if s.split == "test"})
    n_test = sum(1 for s in dataset.samples if s.split == "test")
    lines = [
        "format=1",
        f"frame_size={dataset.frame_size}",
        f"stride={dataset.stride}",
        f"seed={dataset.seed}",
        f"test_fraction={dataset.test_fraction!r}",
        f"rng={RNG_NAME}",
        f"smooth_m={dataset.smoothing.m}",
        f"smooth_n={dataset.smoothing.n}",
        f"pitch_nm={dataset.pitch_nm!r}",
        f"norm_min={dataset.norm.min!r}",
        f"norm_max={dataset.norm.max!r}",
        f"base_frames={len(base_indices)}",
        f"samples={len(dataset.samples)}",
        f"train_samples={len(dataset.samples) - n_test}",
        f"test_samples={n_test}",
        "test_base=" + ",".join(str(i) for i in test_base),
    ]
    lines += [f"origin_{i}={origins[i][0]},{origins[i][1]}"
              for i in base_indices]
    with open(os.path.join(directory, "manifest.txt"), "w",
              encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    for sample in dataset.samples:
        stem = _sample_stem(sample.base_index, sample.aug_id)
        write_grid(Grid2D(pitch_nm=dataset.pitch_nm,
                          values=sample.input.astype(np.float64)),
                   os.path.join(directory, stem + "_in.cmpg"), dtype="u8")
        write_grid(Grid2D(pitch_nm=dataset.pitch_nm,
                          values=sample.target.astype(np.float64)),
                   os.path.join(directory, stem + "_out.cmpg"), dtype="f32")


def _parse_manifest(path):
    entries = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"manifest line {lineno}: expected key=value")
            key, value = line.split("=", 1)
            entries[key] = value
    return entries


def load_dataset(directory):
    manifest = os.path.join(directory, "manifest.txt")
    if not os.path.isfile(manifest):
        raise DataError(f"no manifest.txt in {directory}")
    entries = _parse_manifest(manifest)
    try:
        if entries["format"] != "1":
            raise DataError(
                f"unsupported dataset format {entries['format']}")
        if entries.get("rng", RNG_NAME) != RNG_NAME:
            raise DataError(f"unsupported rng {entries['rng']}")
        frame_size = int(entries["frame_size"])
        base_frames = int(entries["base_frames"])
        test_base = {int(tok) for tok in entries["test_base"].split(",")
                     if tok}
        origins = {i: tuple(int(tok)
                            for tok in entries[f"origin_{i}"].split(","))
                   for i in range(base_frames)}
        norm = NormStats(float(entries["norm_min"]),
                         float(entries["norm_max"]))
        smoothing = SmoothingConfig(int(entries["smooth_m"]),
                                    int(entries["smooth_n"]))
        dataset = DataSet(
            frame_size=frame_size,
            samples=[],
            norm=norm,
            seed=int(entries["seed"]),
            pitch_nm=float(entries["pitch_nm"]),
            stride=int(entries["stride"]),
            test_fraction=float(entries["test_fraction"]),
            smoothing=smoothing,
        )
    except (KeyError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"bad dataset manifest: {exc}")
    for base_index in range(base_frames):
        split = "test" if base_index in test_base else "train"
        for aug_id in range(NUM_DIHEDRAL):
            stem = os.path.join(directory, _sample_stem(base_index, aug_id))
            frame_in = read_grid(stem + "_in.cmpg")
            frame_out = read_grid(stem + "_out.cmpg")
            dataset.samples.append(Sample(
                input=frame_in.values.astype(np.float32),
                target=frame_out.values.astype(np.float32),
                origin=origins[base_index],
                aug_id=aug_id,
                split=split,
                base_index=base_index,
            ))
    declared = int(entries["samples"])
    if len(dataset.samples) != declared:
        raise DataError(
            f"manifest declares {declared} samples, found "
            f"{len(dataset.samples)}")
    return dataset
