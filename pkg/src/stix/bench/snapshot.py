"""Binary index snapshots.

Layout (little-endian): the magic ``STIX1``, then length-prefixed sections
``header``, ``vocab``, ``objects``, ``structure`` and ``models``. Each
section is a u32 name length, the UTF-8 name, a u64 payload length and the
payload. Model weights are stored as raw float64 so a reload reproduces
predictions bit for bit.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from stix.core import Dataset, KeywordVocabulary, SnapshotFormatError
from stix.geometry import Mbr
from stix.mlmodel import Mlp, TrainConfig
from stix.queryengine import VARIANTS, IndexHandle, IndexParams
from stix.rsmi import RsmiIndex
from stix.rtree import RStarTree

MAGIC = b"STIX1"
SECTIONS = ("header", "vocab", "objects", "structure", "models")
_F64 = np.dtype("<f8")
_I64 = np.dtype("<i8")


def _json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def _encode_objects(ds: Dataset) -> bytes:
    n = len(ds)
    lengths = np.fromiter((len(k) for k in ds.keywords), dtype=_I64, count=n)
    flat = np.fromiter((k for kws in ds.keywords for k in sorted(kws)), dtype=_I64, count=int(lengths.sum()))
    parts = [
        struct.pack("<Q", n),
        np.asarray(ds.bounds, dtype=_F64).tobytes(),
        ds.ids.astype(_I64).tobytes(),
        ds.xy.astype(_F64).tobytes(),
        lengths.tobytes(),
        flat.tobytes(),
    ]
    return b"".join(parts)


def _decode_objects(buf: bytes, vocab: KeywordVocabulary) -> Dataset:
    (n,) = struct.unpack_from("<Q", buf, 0)
    off = 8
    bounds = np.frombuffer(buf, _F64, 4, off)
    off += 32
    ids = np.frombuffer(buf, _I64, n, off)
    off += 8 * n
    xy = np.frombuffer(buf, _F64, 2 * n, off).reshape(n, 2)
    off += 16 * n
    lengths = np.frombuffer(buf, _I64, n, off)
    off += 8 * n
    flat = np.frombuffer(buf, _I64, int(lengths.sum()), off).tolist()
    kws, pos = [], 0
    for ln in lengths.tolist():
        kws.append(frozenset(flat[pos : pos + ln]))
        pos += ln
    return Dataset(ids.copy(), xy.copy(), kws, vocab, Mbr(*bounds.tolist()))


def _encode_models(models: list[Mlp]) -> bytes:
    out = [struct.pack("<Q", len(models))]
    for m in models:
        head = [
            m.hidden,
            m.n_outputs,
            m.b_out,
            *m.frame,
            m.initial_loss,
            m.final_loss,
            *m.signs,
        ]
        body = np.concatenate([np.asarray(head, dtype=_F64), m.w_hidden.ravel(), m.b_hidden, m.w_out])
        out.append(body.astype(_F64).tobytes())
    return b"".join(out)


def _decode_models(buf: bytes) -> list[Mlp]:
    (count,) = struct.unpack_from("<Q", buf, 0)
    off = 8
    models = []
    for _ in range(count):
        head = np.frombuffer(buf, _F64, 11, off)
        off += 88
        h = int(head[0])
        w = np.frombuffer(buf, _F64, 4 * h, off).copy()
        off += 32 * h
        models.append(
            Mlp(
                w_hidden=w[: 2 * h].reshape(2, h),
                b_hidden=w[2 * h : 3 * h],
                w_out=w[3 * h :],
                b_out=float(head[2]),
                n_outputs=int(head[1]),
                frame=Mbr(*head[3:7].tolist()),
                initial_loss=float(head[7]),
                final_loss=float(head[8]),
                signs=(float(head[9]), float(head[10])),
            )
        )
    return models


def _params_dict(p: IndexParams) -> dict:
    t = p.train
    return {
        "block_size": p.block_size,
        "min_node": p.min_node,
        "max_node": p.max_node,
        "partition_frac": p.partition_frac,
        "inner_error_margins": p.inner_error_margins,
        "train": {
            "learning_rate": t.learning_rate,
            "epochs": t.epochs,
            "batch_size": t.batch_size,
            "max_samples": t.max_samples,
            "seed": t.seed,
            "monotone": t.monotone,
        },
    }


def snapshot_bytes(h: IndexHandle) -> bytes:
    if h.learned:
        structure, models = h.index.to_dict()
    else:
        structure, models = h.index.to_dict(), []
    header = {"variant": h.variant, "params": _params_dict(h.params), "meta": h.meta}
    payloads = {
        "header": _json(header),
        "vocab": _json(h.dataset.vocab.words),
        "objects": _encode_objects(h.dataset),
        "structure": _json(structure),
        "models": _encode_models(models),
    }
    out = [MAGIC]
    for name in SECTIONS:
        raw = name.encode()
        out += [struct.pack("<I", len(raw)), raw, struct.pack("<Q", len(payloads[name])), payloads[name]]
    return b"".join(out)


def _read_sections(buf: bytes) -> dict[str, bytes]:
    if not buf.startswith(MAGIC):
        raise SnapshotFormatError("not a stix snapshot (bad magic)")
    off = len(MAGIC)
    sections = {}
    try:
        while off < len(buf):
            (ln,) = struct.unpack_from("<I", buf, off)
            off += 4
            name = buf[off : off + ln].decode()
            off += ln
            (size,) = struct.unpack_from("<Q", buf, off)
            off += 8
            if off + size > len(buf):
                raise SnapshotFormatError(f"section {name!r} truncated")
            sections[name] = buf[off : off + size]
            off += size
    except (struct.error, UnicodeDecodeError) as e:
        raise SnapshotFormatError(f"corrupt snapshot: {e}") from None
    missing = [s for s in SECTIONS if s not in sections]
    if missing:
        raise SnapshotFormatError(f"snapshot lacks sections {missing}")
    return sections


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        return json.loads(_read_sections(fh.read())["header"])


def handle_from_bytes(buf: bytes) -> IndexHandle:
    sec = _read_sections(buf)
    header = json.loads(sec["header"])
    variant = header.get("variant")
    if variant not in VARIANTS:
        raise SnapshotFormatError(f"unknown variant tag {variant!r}")
    p = dict(header["params"])
    params = IndexParams(train=TrainConfig(**p.pop("train")), **p)
    vocab = KeywordVocabulary(json.loads(sec["vocab"]))
    dataset = _decode_objects(sec["objects"], vocab)
    structure = json.loads(sec["structure"])
    if variant in ("rstar-if", "ir2"):
        index = RStarTree.from_dict(dataset, structure)
    else:
        index = RsmiIndex.from_dict(dataset, structure, _decode_models(sec["models"]))
    return IndexHandle(variant, index, dataset, params, header.get("meta", {}))


def snapshot_save(h: IndexHandle, path):
    with open(path, "wb") as fh:
        fh.write(snapshot_bytes(h))


def snapshot_load(path) -> IndexHandle:
    with open(path, "rb") as fh:
        return handle_from_bytes(fh.read())
