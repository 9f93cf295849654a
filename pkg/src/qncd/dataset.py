"""Task construction, dataset generation, splitting, and QNCD serialization.

A dataset is fully determined by its TaskSpec: per-sample seeds derive from
the master seed and the sample index, so samples can be regenerated from the
file header alone and generation parallelizes without changing output.

QNCD byte layout (little-endian):
  0..3    magic "QNCD"
  4..5    version u16 = 1
  6..9    header length u32 = H
  10..10+H UTF-8 JSON header
  then n_samples records:
      label u8, initial_node u16, topology_seed u64, noise_seed u64,
      (M+1)*d populations f32, row-major (time-major, node-minor)
  final 8 bytes: CRC-64/XZ of everything preceding
"""

from __future__ import annotations

import dataclasses
import io
import json
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__ as GENERATOR_VERSION
from .crc64 import Crc64Stream
from .dynamics import evolve, random_topology
from .errors import (
    BadMagicError,
    ChecksumError,
    QncdError,
    QncdFormatError,
    TruncatedError,
    ValidationError,
    VersionError,
)
from .noise import (
    KIND_IID,
    KIND_MARKOV,
    PROB_G_NEAR_UNIFORM,
    PROB_G_SKEWED,
    COUPLING_SUPPORT,
    DiscreteDistribution,
    NoiseProcess,
    TransitionMatrix,
    metropolis_chain,
    sample_process,
    stationary_distribution,
)
from .seeds import (
    TAG_NM_TRANSITION_0,
    TAG_NM_TRANSITION_1,
    TAG_SHOTS,
    TAG_SPLIT,
    TAG_NOISE,
    TAG_TOPOLOGY,
    TAG_VS_TRANSITION,
    derive_seed,
)

MAGIC = b"QNCD"
FORMAT_VERSION = 1

TASK_IID = "iid"
TASK_NM = "nm"
TASK_VS = "vs"

# By default the VS-task chain gets a seeded random transition matrix, like
# the NM chains, so its marginal drifts away from the shared initial law and
# the task carries the final-distribution information the published accuracy
# table implies. Passing an explicit stickiness instead builds a
# marginal-preserving chain (classes then differ only in time correlations,
# which no final-distribution model can resolve through random topologies).
DEFAULT_STICKINESS = None

# Edge density of the random topologies. Calibrated so the short-time
# diffusion profile matches the published example tables (the walker leaves
# its start node almost completely by t = 0.1); recorded in every header.
DEFAULT_EDGE_PROB = 0.5

DEFAULT_FRACTIONS = (0.6, 0.2, 0.2)

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class TaskSpec:
    """Everything needed to regenerate a dataset bit-for-bit."""

    task: str
    t_total: float
    steps: int
    nodes: int
    edge_prob: float
    class0: NoiseProcess
    class1: NoiseProcess
    n_samples: int
    master_seed: int
    shots: int | None = None

    def __post_init__(self):
        if self.task not in (TASK_IID, TASK_NM, TASK_VS):
            raise ValidationError(f"unknown task {self.task!r}")
        if self.t_total <= 0:
            raise ValidationError("t_total must be positive")
        if self.steps < 1:
            raise ValidationError("steps must be >= 1")
        if self.nodes < 2:
            raise ValidationError("nodes must be >= 2")
        if not 0.0 < self.edge_prob <= 1.0:
            raise ValidationError("edge_prob must lie in (0, 1]")
        if self.n_samples < 2 or self.n_samples % 2:
            raise ValidationError("n_samples must be even and >= 2 (balanced classes)")
        if not 0 <= self.master_seed <= _MASK64:
            raise ValidationError("master_seed must fit in 64 bits")
        if self.shots is not None and self.shots < 1:
            raise ValidationError("shots must be >= 1 when set")
        if self.task == TASK_IID:
            if self.class0.kind != KIND_IID or self.class1.kind != KIND_IID:
                raise ValidationError("IID task requires two i.i.d. processes")
            if self.class0.dist.probs == self.class1.dist.probs:
                raise ValidationError("IID task requires distinct class distributions")
        elif self.task == TASK_NM:
            if self.class0.kind != KIND_MARKOV or self.class1.kind != KIND_MARKOV:
                raise ValidationError("NM task requires two Markov processes")
        else:
            if self.class0.kind != KIND_IID or self.class1.kind != KIND_MARKOV:
                raise ValidationError("VS task requires an i.i.d. class 0 and Markov class 1")
            if self.class0.dist != self.class1.dist:
                raise ValidationError(
                    "VS task requires both classes to share support and initial distribution"
                )
            if self.class1.stickiness is not None:
                pi = stationary_distribution(self.class1.transition)
                if np.max(np.abs(pi - self.class0.dist.probs_array())) > 1e-8:
                    raise ValidationError(
                        "sticky VS chains must leave class 0's distribution stationary"
                    )

    @property
    def delta(self) -> float:
        return self.t_total / self.steps

    def process_for_label(self, label: int) -> NoiseProcess:
        return self.class1 if label else self.class0


@dataclass(frozen=True, eq=False)
class Sample:
    """One labeled realization; populations are stored as float32."""

    label: int
    initial_node: int
    topology_seed: int
    noise_seed: int
    populations: np.ndarray = field(repr=False)

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.label == other.label
            and self.initial_node == other.initial_node
            and self.topology_seed == other.topology_seed
            and self.noise_seed == other.noise_seed
            and self.populations.shape == other.populations.shape
            and bool(np.array_equal(self.populations, other.populations))
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    spec: TaskSpec
    samples: tuple[Sample, ...]
    generator_version: str = GENERATOR_VERSION

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if len(self.samples) != self.spec.n_samples:
            raise ValidationError(
                f"dataset holds {len(self.samples)} samples, spec says {self.spec.n_samples}"
            )
        ones = sum(s.label for s in self.samples)
        if ones * 2 != len(self.samples):
            raise ValidationError("dataset must hold equally many samples per label")
        shape = (self.spec.steps + 1, self.spec.nodes)
        for q, s in enumerate(self.samples):
            if s.populations.shape != shape:
                raise ValidationError(f"sample {q} has populations of shape {s.populations.shape}")

    def __len__(self) -> int:
        return len(self.samples)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.spec == other.spec
            and self.generator_version == other.generator_version
            and len(self.samples) == len(other.samples)
            and all(a == b for a, b in zip(self.samples, other.samples))
        )


def _dirichlet_transition(seed: int, size: int) -> TransitionMatrix:
    rng = np.random.default_rng(seed)
    cols = rng.dirichlet(np.ones(size), size=size)
    return TransitionMatrix.from_array(cols.T)


def build_processes(
    task: str, master_seed: int, stickiness: float | None = DEFAULT_STICKINESS
) -> tuple[NoiseProcess, NoiseProcess]:
    """Construct the two class noise processes for a task.

    IID: the two published coupling laws. NM: the same laws as initial
    distributions plus per-class transition matrices drawn column-wise from
    Dirichlet(1,..,1), seeded from the master seed. VS: the skewed law vs a
    chain starting from that same law; the chain's transitions are a seeded
    Dirichlet draw, or a marginal-preserving sticky chain when an explicit
    ``stickiness`` is given.
    """
    skewed = DiscreteDistribution(COUPLING_SUPPORT, PROB_G_SKEWED)
    near_uniform = DiscreteDistribution(COUPLING_SUPPORT, PROB_G_NEAR_UNIFORM)
    if task == TASK_IID:
        return NoiseProcess(skewed), NoiseProcess(near_uniform)
    if task == TASK_NM:
        t0 = _dirichlet_transition(derive_seed(master_seed, TAG_NM_TRANSITION_0), skewed.size)
        t1 = _dirichlet_transition(derive_seed(master_seed, TAG_NM_TRANSITION_1), near_uniform.size)
        return NoiseProcess(skewed, t0), NoiseProcess(near_uniform, t1)
    if task == TASK_VS:
        if stickiness is None:
            chain = _dirichlet_transition(derive_seed(master_seed, TAG_VS_TRANSITION), skewed.size)
            return NoiseProcess(skewed), NoiseProcess(skewed, chain)
        chain = metropolis_chain(skewed, stickiness)
        return NoiseProcess(skewed), NoiseProcess(skewed, chain, stickiness)
    raise ValidationError(f"unknown task {task!r}")


def build_task_spec(
    task: str,
    t_total: float,
    master_seed: int,
    steps: int = 15,
    nodes: int = 40,
    edge_prob: float = DEFAULT_EDGE_PROB,
    n_samples: int = 20_000,
    stickiness: float | None = DEFAULT_STICKINESS,
    shots: int | None = None,
) -> TaskSpec:
    """TaskSpec with the class processes derived from the master seed."""
    class0, class1 = build_processes(task, master_seed, stickiness)
    return TaskSpec(
        task=task,
        t_total=float(t_total),
        steps=steps,
        nodes=nodes,
        edge_prob=edge_prob,
        class0=class0,
        class1=class1,
        n_samples=n_samples,
        master_seed=master_seed,
        shots=shots,
    )


# The six dataset presets: master seeds are fixed so that every preset is a
# concrete, regenerable artifact. The NM seeds were screened so that the two
# reseeded transition matrices produce a well-posed classification task.
PRESET_SEEDS = {
    "iid-0.1": 10_001,
    "iid-1": 10_002,
    "nm-0.1": 13,
    "nm-1": 299,
    "vs-0.1": 10_014,
    "vs-1": 10_016,
}


def preset_task_spec(name: str, n_samples: int = 20_000, **overrides) -> TaskSpec:
    if name not in PRESET_SEEDS:
        raise ValidationError(f"unknown preset {name!r} (have {sorted(PRESET_SEEDS)})")
    task, t_str = name.rsplit("-", 1)
    args = dict(
        task=task,
        t_total=float(t_str),
        master_seed=PRESET_SEEDS[name],
        n_samples=n_samples,
    )
    args.update(overrides)
    return build_task_spec(**args)


def _clamp_store(populations: np.ndarray) -> np.ndarray:
    # Rounding noise in [-1e-12, 0) must not violate the file-format
    # nonnegativity invariant.
    pops = np.where((populations < 0.0) & (populations >= -1e-12), 0.0, populations)
    return pops.astype("<f4")


def generate_sample(spec: TaskSpec, q: int) -> Sample:
    """Generate sample q of a dataset; a pure function of (spec, q)."""
    topology_seed = derive_seed(spec.master_seed, q, TAG_TOPOLOGY)
    noise_seed = derive_seed(spec.master_seed, q, TAG_NOISE)
    try:
        rng_topo = np.random.default_rng(topology_seed)
        topology = random_topology(spec.nodes, spec.edge_prob, rng_topo)
        initial_node = int(rng_topo.integers(1, spec.nodes + 1))
        label = q % 2
        process = spec.process_for_label(label)
        couplings = sample_process(process, spec.steps, np.random.default_rng(noise_seed))
        seq = evolve(topology, couplings, initial_node, spec.delta)
        pops = seq.populations
        if spec.shots is not None:
            rng_shots = np.random.default_rng(derive_seed(spec.master_seed, q, TAG_SHOTS))
            counts = np.stack(
                [rng_shots.multinomial(spec.shots, row / row.sum()) for row in pops]
            )
            pops = counts / float(spec.shots)
        return Sample(label, initial_node, topology_seed, noise_seed, _clamp_store(pops))
    except QncdError as exc:
        raise type(exc)(f"sample {q}: {exc}") from exc


def _generate_range(spec: TaskSpec, start: int, stop: int) -> list[Sample]:
    return [generate_sample(spec, q) for q in range(start, stop)]


def generate(spec: TaskSpec, workers: int | None = None) -> Dataset:
    """Generate the full dataset described by ``spec``.

    ``workers`` > 1 parallelizes over sample indices (the per-sample seeds
    make this order-independent); defaults to the QNCD_THREADS environment
    variable or 1.
    """
    if workers is None:
        workers = int(os.environ.get("QNCD_THREADS", "1"))
    n = spec.n_samples
    if workers <= 1 or n < 4 * workers:
        samples = _generate_range(spec, 0, n)
    else:
        bounds = np.linspace(0, n, workers * 4 + 1, dtype=int)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = pool.map(_generate_range, *zip(*[(spec, a, b) for a, b in zip(bounds, bounds[1:])]))
        samples = [s for chunk in chunks for s in chunk]
    return Dataset(spec, tuple(samples))


def split(ds: Dataset, fractions: tuple[float, float, float] = DEFAULT_FRACTIONS):
    """Stratified deterministic split into (train, val, test) datasets.

    Per-class counts are floored for val and test, with the remainder going
    to train, so every split stays balanced.
    """
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ValidationError("fractions must be three positive numbers")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError(f"fractions sum to {sum(fractions)!r}, not 1")
    per_class = len(ds) // 2
    n_val = int(np.floor(fractions[1] * per_class))
    n_test = int(np.floor(fractions[2] * per_class))
    n_train = per_class - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise ValidationError(f"degenerate split: per-class counts {(n_train, n_val, n_test)}")
    rng = np.random.default_rng(derive_seed(ds.spec.master_seed, TAG_SPLIT))
    out = {"train": [], "val": [], "test": []}
    for label in (0, 1):
        idx = [q for q, s in enumerate(ds.samples) if s.label == label]
        rng.shuffle(idx)
        out["train"].extend(idx[:n_train])
        out["val"].extend(idx[n_train : n_train + n_val])
        out["test"].extend(idx[n_train + n_val :])
    datasets = []
    for part in ("train", "val", "test"):
        members = sorted(out[part])
        spec = dataclasses.replace(ds.spec, n_samples=len(members))
        datasets.append(Dataset(spec, tuple(ds.samples[q] for q in members)))
    return tuple(datasets)


def _process_header(process: NoiseProcess) -> dict:
    return {
        "support": list(process.dist.support),
        "probs": list(process.dist.probs),
        "transition": [list(row) for row in process.transition.entries]
        if process.transition is not None
        else None,
        "stickiness": process.stickiness,
    }


def _process_from_header(block: dict) -> NoiseProcess:
    dist = DiscreteDistribution(tuple(block["support"]), tuple(block["probs"]))
    transition = None
    if block.get("transition") is not None:
        transition = TransitionMatrix(tuple(tuple(row) for row in block["transition"]))
    return NoiseProcess(dist, transition, block.get("stickiness"))


def spec_header_dict(spec: TaskSpec, generator_version: str = GENERATOR_VERSION) -> dict:
    header = {
        "task": spec.task,
        "t_total": spec.t_total,
        "steps": spec.steps,
        "nodes": spec.nodes,
        "edge_prob": spec.edge_prob,
        "n_samples": spec.n_samples,
        "master_seed": spec.master_seed,
        "class0": _process_header(spec.class0),
        "class1": _process_header(spec.class1),
        "storage": "f32",
        "generator_version": generator_version,
    }
    if spec.shots is not None:
        header["shots"] = spec.shots
    return header


def header_dict(ds: Dataset) -> dict:
    return spec_header_dict(ds.spec, ds.generator_version)


def spec_from_header(header: dict) -> TaskSpec:
    try:
        return TaskSpec(
            task=header["task"],
            t_total=float(header["t_total"]),
            steps=int(header["steps"]),
            nodes=int(header["nodes"]),
            edge_prob=float(header["edge_prob"]),
            class0=_process_from_header(header["class0"]),
            class1=_process_from_header(header["class1"]),
            n_samples=int(header["n_samples"]),
            master_seed=int(header["master_seed"]),
            shots=header.get("shots"),
        )
    except KeyError as exc:
        raise QncdFormatError(f"header is missing field {exc}") from exc


_RECORD_HEAD = struct.Struct("<BHQQ")


def write_qncd(ds: Dataset, sink) -> None:
    """Serialize a dataset; ``sink`` is a binary stream or a path."""
    if not hasattr(sink, "write"):
        with open(sink, "wb") as fh:
            write_qncd(ds, fh)
        return
    crc = Crc64Stream()

    def emit(data: bytes) -> None:
        crc.update(data)
        sink.write(data)

    header = json.dumps(header_dict(ds)).encode("utf-8")
    emit(MAGIC)
    emit(struct.pack("<HI", FORMAT_VERSION, len(header)))
    emit(header)
    for sample in ds.samples:
        emit(
            _RECORD_HEAD.pack(
                sample.label, sample.initial_node, sample.topology_seed, sample.noise_seed
            )
        )
        emit(np.ascontiguousarray(sample.populations, dtype="<f4").tobytes())
    sink.write(struct.pack("<Q", crc.value))


def _read_exact(source, n: int, crc: Crc64Stream | None, what: str) -> bytes:
    data = source.read(n)
    if len(data) != n:
        raise TruncatedError(f"stream ended while reading {what} ({len(data)}/{n} bytes)")
    if crc is not None:
        crc.update(data)
    return data


def read_qncd(source) -> Dataset:
    """Parse a QNCD stream or file path, verifying structure and checksum."""
    if not hasattr(source, "read"):
        with open(source, "rb") as fh:
            return read_qncd(fh)
    crc = Crc64Stream()
    magic = _read_exact(source, 4, crc, "magic")
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    version, header_len = struct.unpack("<HI", _read_exact(source, 6, crc, "version/header length"))
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported format version {version}")
    try:
        header = json.loads(_read_exact(source, header_len, crc, "header").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise QncdFormatError(f"header is not valid JSON: {exc}") from exc
    spec = spec_from_header(header)
    row_bytes = (spec.steps + 1) * spec.nodes * 4
    samples = []
    for q in range(spec.n_samples):
        label, node, tseed, nseed = _RECORD_HEAD.unpack(
            _read_exact(source, _RECORD_HEAD.size, crc, f"record {q}")
        )
        raw = _read_exact(source, row_bytes, crc, f"record {q} payload")
        pops = np.frombuffer(raw, dtype="<f4").reshape(spec.steps + 1, spec.nodes).copy()
        samples.append(Sample(label, node, tseed, nseed, pops))
    (stored_crc,) = struct.unpack("<Q", _read_exact(source, 8, None, "checksum trailer"))
    if stored_crc != crc.value:
        raise ChecksumError(f"checksum mismatch: stored {stored_crc:#x}, computed {crc.value:#x}")
    if source.read(1) != b"":
        raise QncdFormatError("trailing bytes after checksum")
    return Dataset(spec, tuple(samples), header.get("generator_version", GENERATOR_VERSION))


def qncd_bytes(ds: Dataset) -> bytes:
    buf = io.BytesIO()
    write_qncd(ds, buf)
    return buf.getvalue()


FEATURE_FINAL = "final"
FEATURE_FULL = "full"


def feature_view(ds: Dataset, mode: str):
    """Feature tensor plus 0/1 labels.

    ``final`` returns the last population row per sample, shape (n, d).
    ``full`` returns all rows, shape (n, M+1, d); non-recurrent consumers
    flatten the trailing axes row-major (time-major, node-minor).
    """
    if mode not in (FEATURE_FINAL, FEATURE_FULL):
        raise ValidationError(f"unknown feature mode {mode!r}")
    labels = np.array([s.label for s in ds.samples], dtype=np.int64)
    stack = np.stack([s.populations for s in ds.samples]).astype(np.float64)
    if mode == FEATURE_FINAL:
        return stack[:, -1, :], labels
    return stack, labels


def seed_pairs(ds: Dataset) -> set[tuple[int, int]]:
    """The (topology_seed, noise_seed) identity pairs of a dataset."""
    return {(s.topology_seed, s.noise_seed) for s in ds.samples}
