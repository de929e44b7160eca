"""Hogwild-style shared parameter store, target snapshot and global frame counter.

Writers never take a lock covering the whole vector. A vector is split into
fixed stripes, each with its own lock, and an update walks the stripes one at a
time, so every element receives an indivisible read-modify-write while no
ordering exists across stripes. Readers copy without locking and may observe a
mix of old and new elements; that is the contract of lock-free training.

Each object comes in two flavours. The thread-local one keeps a numpy array and
threading locks. The process-shared one (process_shared=True) keeps its data in
a multiprocessing RawArray viewed through np.frombuffer, and its locks and
counters in multiprocessing, so it can be handed to actor-learner processes.
"""

import logging
import multiprocessing
import threading
from typing import Callable, List, Optional, Tuple

import numpy as np

from ..config import settings
from ..exceptions import ConfigurationError

logger = logging.getLogger(__name__)


def mp_context():
    """multiprocessing context for shared memory and actor-learner processes"""
    return multiprocessing.get_context(settings.MP_START_METHOD)


def _view(raw, dtype: np.dtype, size: int) -> np.ndarray:
    if size == 0:
        return np.zeros(0, dtype=dtype)
    return np.frombuffer(raw, dtype=dtype, count=size)


def _raw_copy(values: np.ndarray):
    """RawArray holding a copy of values, and the numpy view onto it"""
    try:
        ctype = np.ctypeslib.as_ctypes_type(values.dtype)
    except NotImplementedError as e:
        raise ConfigurationError(f"dtype {values.dtype} cannot be placed in shared memory") from e
    raw = mp_context().RawArray(ctype, int(values.shape[0]))
    view = _view(raw, values.dtype, values.shape[0])
    view[:] = values
    return raw, view


class SharedVector:
    """Fixed-length vector shared by all actor-learners with per-element indivisible adds"""

    def __init__(self, initial: np.ndarray, stripes: Optional[int] = None, process_shared: bool = False):
        values = np.array(initial, copy=True).reshape(-1)
        self._raw = None
        self._process_shared = process_shared
        if process_shared:
            self._raw, values = _raw_copy(values)
        self._values = values
        n_stripes = max(1, min(stripes or settings.LOCK_STRIPES, max(1, values.shape[0])))
        edges = np.linspace(0, values.shape[0], n_stripes + 1).astype(int)
        self._stripes: List[slice] = [
            slice(int(lo), int(hi)) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo
        ]
        new_lock = mp_context().Lock if process_shared else threading.Lock
        self._locks = [new_lock() for _ in self._stripes]

    @classmethod
    def zeros(
        cls, size: int, dtype=np.float32, stripes: Optional[int] = None, process_shared: bool = False
    ) -> "SharedVector":
        return cls(np.zeros(size, dtype=dtype), stripes=stripes, process_shared=process_shared)

    def __getstate__(self):
        if not self._process_shared:
            raise ConfigurationError("a thread-local SharedVector cannot be sent to another process")
        state = self.__dict__.copy()
        state["_values"] = (self._values.dtype.str, self._values.shape[0])
        return state

    def __setstate__(self, state):
        dtype, size = state["_values"]
        self.__dict__.update(state)
        self._values = _view(self._raw, np.dtype(dtype), size)

    def __len__(self) -> int:
        return self._values.shape[0]

    @property
    def process_shared(self) -> bool:
        return self._process_shared

    @property
    def dtype(self):
        return self._values.dtype

    @property
    def element_width(self) -> int:
        """Bytes per indivisible element"""
        return self._values.dtype.itemsize

    @property
    def values(self) -> np.ndarray:
        """Live view; read-only use. Writes must go through add/update."""
        return self._values

    def _check(self, other: np.ndarray, what: str) -> np.ndarray:
        other = np.asarray(other).reshape(-1)
        if other.shape[0] != self._values.shape[0]:
            raise ConfigurationError(
                f"{what} has length {other.shape[0]}, shared vector has {self._values.shape[0]}"
            )
        return other

    def snapshot(self) -> np.ndarray:
        return self._values.copy()

    def add(self, delta: np.ndarray) -> None:
        delta = self._check(delta, "delta").astype(self._values.dtype, copy=False)
        for stripe, lock in zip(self._stripes, self._locks):
            with lock:
                self._values[stripe] += delta[stripe]

    def update(self, fn: Callable[[np.ndarray, slice], None]) -> None:
        """
        Apply an in-place elementwise read-modify-write stripe by stripe

        Args:
            fn: Called as fn(view, stripe) with the stripe lock held; must write only into view
        """
        for stripe, lock in zip(self._stripes, self._locks):
            with lock:
                fn(self._values[stripe], stripe)

    def assign(self, values: np.ndarray) -> None:
        values = self._check(values, "values")
        for stripe, lock in zip(self._stripes, self._locks):
            with lock:
                self._values[stripe] = values[stripe]


class SharedParams:
    """theta and, when the layout needs one, theta_v"""

    def __init__(
        self,
        theta: np.ndarray,
        theta_v: Optional[np.ndarray] = None,
        stripes: Optional[int] = None,
        process_shared: bool = False,
    ):
        self.theta = SharedVector(theta, stripes=stripes, process_shared=process_shared)
        if theta_v is None:
            theta_v = np.zeros(0, dtype=self.theta.dtype)
        self.theta_v = SharedVector(theta_v, stripes=stripes, process_shared=process_shared)

    @property
    def has_value_params(self) -> bool:
        return len(self.theta_v) > 0

    @property
    def process_shared(self) -> bool:
        return self.theta.process_shared

    def snapshot(self) -> Tuple[np.ndarray, np.ndarray]:
        return snapshot_params(self.theta), snapshot_params(self.theta_v)


def snapshot_params(shared: SharedVector) -> np.ndarray:
    """Private copy theta' of a shared vector (per-element freshness only)"""
    return shared.snapshot()


def apply_update(shared: SharedVector, delta: np.ndarray) -> None:
    """Add delta into the shared vector element by element, without a global lock"""
    shared.add(delta)


def _frozen(values: np.ndarray) -> np.ndarray:
    frozen = np.array(values, copy=True)
    frozen.setflags(write=False)
    return frozen


class TargetSnapshot:
    """
    Frozen copy theta^- replaced as a whole

    A refresh builds a new read-only array and swaps one reference, so a reader
    always holds one complete snapshot.
    """

    def __init__(self, initial: np.ndarray):
        self._current: Tuple[np.ndarray, int] = (_frozen(initial), 0)
        self._write_lock = threading.Lock()

    def read(self) -> Tuple[np.ndarray, int]:
        """(theta_minus, version) from a single reference read"""
        return self._current

    @property
    def theta_minus(self) -> np.ndarray:
        return self.read()[0]

    @property
    def version(self) -> int:
        return self.read()[1]

    def replace(self, values: np.ndarray) -> int:
        frozen = _frozen(values)
        with self._write_lock:
            version = self._current[1] + 1
            self._current = (frozen, version)
        return version


class ProcessTargetSnapshot(TargetSnapshot):
    """
    TargetSnapshot whose master copy lives in shared memory

    A refresh writes the buffer and bumps the version under one multiprocessing
    lock. Each process keeps a frozen local copy and re-copies the buffer, under
    the same lock, only when the shared version has moved.
    """

    def __init__(self, initial: np.ndarray):
        initial = np.asarray(initial).reshape(-1)
        self._raw, self._buffer = _raw_copy(initial)
        self._shared_version = mp_context().Value("q", 0)
        self._current = (_frozen(initial), 0)

    def __getstate__(self):
        return {
            "_raw": self._raw,
            "_shared_version": self._shared_version,
            "_layout": (self._buffer.dtype.str, self._buffer.shape[0]),
        }

    def __setstate__(self, state):
        dtype, size = state.pop("_layout")
        self.__dict__.update(state)
        self._buffer = _view(self._raw, np.dtype(dtype), size)
        self._current = (np.zeros(0, dtype=self._buffer.dtype), -1)

    def read(self) -> Tuple[np.ndarray, int]:
        cached = self._current
        if self._shared_version.value == cached[1]:
            return cached
        with self._shared_version.get_lock():
            cached = (_frozen(self._buffer), self._shared_version.value)
        self._current = cached
        return cached

    def replace(self, values: np.ndarray) -> int:
        values = np.asarray(values).reshape(-1)
        with self._shared_version.get_lock():
            self._buffer[:] = values
            self._shared_version.value += 1
            version = self._shared_version.value
        self._current = (_frozen(values), version)
        return version


def new_target_snapshot(initial: np.ndarray, process_shared: bool = False) -> TargetSnapshot:
    if process_shared:
        return ProcessTargetSnapshot(initial)
    return TargetSnapshot(initial)


def refresh_target(
    shared: SharedVector,
    target: TargetSnapshot,
    T: int,
    I_target: int,
    by: int = 1,
) -> bool:
    """
    Refresh theta^- when the increment that produced T crossed a multiple of I_target

    Only the learner whose increment crosses the boundary refreshes, so one
    period yields exactly one refresh.

    Args:
        shared: Live theta
        target: Snapshot to replace
        T: Post-increment value of the global counter
        I_target: Refresh period in frames
        by: Size of the increment that produced T

    Returns:
        True when a refresh happened
    """
    if I_target < 1:
        raise ConfigurationError(f"I_target must be >= 1, got {I_target}")
    if T // I_target > (T - by) // I_target:
        version = target.replace(shared.snapshot())
        logger.debug(f"Target network refreshed at T={T} (version {version})")
        return True
    return False


class GlobalCounter:
    """Shared frame counter T with lost-update-free increments"""

    def __init__(self, start: int = 0, process_shared: bool = False):
        self._shared = mp_context().Value("q", start) if process_shared else None
        self._value = start
        self._lock = None if process_shared else threading.Lock()

    def __getstate__(self):
        if self._shared is None:
            raise ConfigurationError("a thread-local GlobalCounter cannot be sent to another process")
        return {"_shared": self._shared, "_value": 0, "_lock": None}

    @property
    def value(self) -> int:
        if self._shared is not None:
            return self._shared.value
        return self._value

    def increment(self, by: int = 1) -> int:
        """Add by and return the post-increment value"""
        if by < 1:
            raise ConfigurationError(f"increment must be >= 1, got {by}")
        if self._shared is not None:
            with self._shared.get_lock():
                self._shared.value += by
                return self._shared.value
        with self._lock:
            self._value += by
            return self._value


def increment_counter(counter: GlobalCounter, by: int = 1) -> int:
    return counter.increment(by)
