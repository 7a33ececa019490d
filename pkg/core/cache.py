# core/cache.py
from __future__ import annotations
from typing import Dict, Any, Optional
import hashlib
import threading

import numpy as np

_cache: Dict[str, Any] = {}
_lock = threading.Lock()
MAX_ENTRIES = 256

def array_hash(arr: np.ndarray) -> str:
    a = np.ascontiguousarray(np.asarray(arr, dtype=float))
    h = hashlib.md5()
    h.update(str(a.shape).encode("ascii"))
    h.update(a.tobytes())
    return h.hexdigest()

def get(key: str) -> Optional[Any]:
    with _lock:
        return _cache.get(key)

def set_(key: str, value: Any) -> None:
    with _lock:
        while len(_cache) >= MAX_ENTRIES and key not in _cache:
            _cache.pop(next(iter(_cache)), None)
        _cache[key] = value

def size() -> int:
    with _lock:
        return len(_cache)

def clear() -> None:
    with _lock:
        _cache.clear()
