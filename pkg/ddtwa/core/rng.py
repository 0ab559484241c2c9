"""
计数器型随机数流
向量化的 Philox-4x32-10，键为主种子，计数器为 (轨迹, 槽位, 步数, 流标签)。
同一轨迹的随机数与批次划分和执行顺序无关。
"""

from enum import IntEnum
from typing import Tuple

import numpy as np

_MASK32 = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_ROUNDS = 10
_TWO_POW_32 = 4294967296.0


class StreamTag(IntEnum):
    """随机流用途标签 (计数器第四个字)"""
    INITIAL_SPINS = 1
    CAVITY_INITIAL = 2
    DISORDER = 3
    OU_INITIAL = 4
    CHANNEL_BASE = 16  # 第 c 个噪声通道使用 CHANNEL_BASE + c


def philox4x32(
    counter: Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    key: Tuple[int, int],
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Philox-4x32-10 分组函数

    Args:
        counter: 四个可广播的 uint64 数组, 每个元素 < 2^32
        key: 两个 32 位键字

    Returns:
        四个 uint64 数组, 每个元素为 32 位随机字
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) for c in counter)
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for round_index in range(_ROUNDS):
        if round_index > 0:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> np.uint64(32), p0 & _MASK32
        hi1, lo1 = p1 >> np.uint64(32), p1 & _MASK32
        c0, c1, c2, c3 = (
            hi1 ^ c1 ^ np.uint64(k0),
            lo1,
            hi0 ^ c3 ^ np.uint64(k1),
            lo0,
        )
    return c0, c1, c2, c3


class CounterRNG:
    """
    以 (master_seed) 为键的计数器型随机数源

    每次调用给出 (轨迹索引, 槽位, 步数, 标签) 处的确定性随机字,
    不保存任何可变状态，因此可在任意线程间共享。
    """

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("随机种子必须为非负整数")
        self.seed = int(seed)
        self._key = (self.seed & 0xFFFFFFFF, (self.seed >> 32) & 0xFFFFFFFF)

    def words(
        self,
        trajectories: np.ndarray,
        n_slots: int,
        step: int,
        tag: int,
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """返回形状为 (len(trajectories), n_slots) 的四组 32 位随机字"""
        traj = np.asarray(trajectories, dtype=np.uint64).reshape(-1, 1)
        slots = np.arange(n_slots, dtype=np.uint64).reshape(1, -1)
        return philox4x32(
            (traj, slots, np.uint64(step & 0xFFFFFFFF), np.uint64(int(tag) & 0xFFFFFFFF)),
            self._key,
        )

    def uniforms(self, trajectories: np.ndarray, n_slots: int, step: int, tag: int) -> np.ndarray:
        """(0, 1) 开区间上的均匀随机数, 形状 (B, n_slots, 4)"""
        w = self.words(trajectories, n_slots, step, tag)
        return (np.stack(w, axis=-1).astype(np.float64) + 0.5) / _TWO_POW_32

    def normals(self, trajectories: np.ndarray, n_slots: int, step: int, tag: int) -> np.ndarray:
        """
        标准正态随机数 (Box-Muller), 形状 (B, n_slots, 4)

        每个 (轨迹, 槽位, 步数, 标签) 最多提供四个独立正态数。
        """
        u = self.uniforms(trajectories, n_slots, step, tag)
        r01 = np.sqrt(-2.0 * np.log(u[..., 0]))
        r23 = np.sqrt(-2.0 * np.log(u[..., 2]))
        a01 = 2.0 * np.pi * u[..., 1]
        a23 = 2.0 * np.pi * u[..., 3]
        return np.stack(
            (r01 * np.cos(a01), r01 * np.sin(a01), r23 * np.cos(a23), r23 * np.sin(a23)),
            axis=-1,
        )

    def signs(self, trajectories: np.ndarray, n_slots: int, step: int, tag: int) -> np.ndarray:
        """±1 随机符号, 形状 (B, n_slots, 4)"""
        w = self.words(trajectories, n_slots, step, tag)
        bits = np.stack(w, axis=-1) >> np.uint64(31)
        return np.where(bits == 1, 1.0, -1.0)
