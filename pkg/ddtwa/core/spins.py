"""
相空间状态与初始采样
离散 Wigner 采样自旋初态、旋转到目标方向，以及腔模的高斯 Wigner 采样
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .rng import CounterRNG, StreamTag
from ..models.schemas import InitialStateConfig

SPIN_LENGTH_SQUARED = 3.0
_DOWN = np.array([0.0, 0.0, -1.0])


class BlochVector(NamedTuple):
    """单个自旋的经典分量"""
    sx: float
    sy: float
    sz: float


@dataclass
class SpinEnsembleState:
    """
    一批轨迹的相空间点

    spins 形状为 (B, N, 3)，cavity 形状为 (B,) 的复振幅 (无腔模时为 None)。
    """
    spins: np.ndarray
    cavity: Optional[np.ndarray] = None
    time: float = 0.0

    def __post_init__(self):
        if self.spins.ndim != 3 or self.spins.shape[-1] != 3:
            raise ValueError(f"spins 形状必须为 (B, N, 3)，实际为 {self.spins.shape}")
        if self.spins.shape[1] < 1:
            raise ValueError("自旋数 N 必须 >= 1")

    @property
    def batch_size(self) -> int:
        return self.spins.shape[0]

    @property
    def n_spins(self) -> int:
        return self.spins.shape[1]

    def copy(self) -> "SpinEnsembleState":
        cavity = None if self.cavity is None else self.cavity.copy()
        return SpinEnsembleState(self.spins.copy(), cavity, self.time)


@dataclass
class ProductStateSpec:
    """逐自旋的初始 Bloch 方向 (即使均匀也显式存储)"""
    theta: np.ndarray
    phi: np.ndarray
    cavity_alpha0: Optional[complex] = None

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.phi = np.asarray(self.phi, dtype=np.float64)
        if self.theta.shape != self.phi.shape or self.theta.ndim != 1:
            raise ValueError("theta 与 phi 必须为等长一维数组")
        if not (np.all(np.isfinite(self.theta)) and np.all(np.isfinite(self.phi))):
            raise ValueError("方向角必须为有限值")

    @classmethod
    def uniform(cls, theta: float, phi: float, n: int, cavity_alpha0: Optional[complex] = None) -> "ProductStateSpec":
        """把同一方向广播到 n 个自旋"""
        return cls(np.full(n, float(theta)), np.full(n, float(phi)), cavity_alpha0)

    @classmethod
    def from_config(cls, config: InitialStateConfig, n: int) -> "ProductStateSpec":
        theta = np.broadcast_to(np.asarray(config.theta, dtype=np.float64), (n,)).copy()
        phi = np.broadcast_to(np.asarray(config.phi, dtype=np.float64), (n,)).copy()
        return cls(theta, phi, config.alpha0_complex)

    @property
    def n_spins(self) -> int:
        return self.theta.shape[0]

    def directions(self) -> np.ndarray:
        """目标单位向量, 形状 (N, 3)"""
        return np.stack(
            (np.sin(self.theta) * np.cos(self.phi),
             np.sin(self.theta) * np.sin(self.phi),
             np.cos(self.theta)),
            axis=-1,
        )


def rotations_to_directions(theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """
    把 (0, 0, -1) 转到 (sinθcosφ, sinθsinφ, cosθ) 的正交旋转矩阵

    绕轴 ẑ₋ × n̂ 转过两者夹角; 目标为 +z 时取绕 x 轴转 π。

    Args:
        theta: 极角数组
        phi: 方位角数组

    Returns:
        形状 (..., 3, 3) 的旋转矩阵
    """
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    target = np.stack(
        (np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)), axis=-1
    )
    axis = np.cross(_DOWN, target)
    s = np.linalg.norm(axis, axis=-1)
    c = target @ _DOWN

    safe = s > 1e-12
    u = np.where(safe[..., None], axis / np.where(safe, s, 1.0)[..., None], 0.0)
    k = np.zeros(u.shape[:-1] + (3, 3))
    k[..., 0, 1], k[..., 0, 2] = -u[..., 2], u[..., 1]
    k[..., 1, 0], k[..., 1, 2] = u[..., 2], -u[..., 0]
    k[..., 2, 0], k[..., 2, 1] = -u[..., 1], u[..., 0]
    eye = np.broadcast_to(np.eye(3), k.shape)
    rotation = eye + s[..., None, None] * k + (1.0 - c)[..., None, None] * (k @ k)

    flip = np.diag([1.0, -1.0, -1.0])
    rotation = np.where((~safe & (c < 0))[..., None, None], flip, rotation)
    rotation = np.where((~safe & (c >= 0))[..., None, None], eye, rotation)
    return rotation


def rotation_to_direction(theta: float, phi: float) -> np.ndarray:
    """单个方向的旋转矩阵 (3×3)"""
    if not (np.isfinite(theta) and np.isfinite(phi)):
        raise ValueError("方向角必须为有限值")
    return rotations_to_directions(np.asarray(theta), np.asarray(phi))


def sample_down_configurations(rng: CounterRNG, trajectories: Sequence[int], n_spins: int) -> np.ndarray:
    """
    自旋朝下态的离散 Wigner 采样

    每个自旋等概率取 (±1, ±1, -1) 四种构型之一。

    Returns:
        形状 (B, N, 3) 的数组
    """
    signs = rng.signs(np.asarray(trajectories), n_spins, 0, StreamTag.INITIAL_SPINS)
    configs = np.empty(signs.shape[:2] + (3,))
    configs[..., 0] = signs[..., 0]
    configs[..., 1] = signs[..., 1]
    configs[..., 2] = -1.0
    return configs


def sample_down_configuration(rng: CounterRNG, trajectory: int = 0, spin: int = 0) -> BlochVector:
    """单个自旋的离散采样 (取自该轨迹该自旋的计数器位置)"""
    s = sample_down_configurations(rng, [trajectory], spin + 1)[0, spin]
    return BlochVector(float(s[0]), float(s[1]), float(s[2]))


def sample_cavity_initial(alpha0: complex, rng: CounterRNG, trajectories: Sequence[int]) -> np.ndarray:
    """
    相干态 (或真空) 的 Wigner 采样: α = α0 + (g1 + i g2)/2

    每个正交分量围绕 α0 的方差为 1/4。
    """
    g = rng.normals(np.asarray(trajectories), 1, 0, StreamTag.CAVITY_INITIAL)[:, 0, :]
    return complex(alpha0) + 0.5 * (g[:, 0] + 1j * g[:, 1])


def sample_initial_ensemble(
    spec: ProductStateSpec,
    n: int,
    rng: CounterRNG,
    trajectories: Sequence[int] = (0,),
    with_cavity: bool = False,
) -> SpinEnsembleState:
    """
    采样一批轨迹的初始相空间点

    Args:
        spec: 乘积态方向
        n: 自旋数
        rng: 计数器型随机源
        trajectories: 轨迹索引
        with_cavity: 模型含腔模时为 True (未给 alpha0 时按真空采样)

    Returns:
        SpinEnsembleState, 每个自旋满足 |s|^2 = 3
    """
    if n < 1:
        raise ValueError("自旋数 n 必须 >= 1")
    if spec.n_spins != n:
        raise ValueError(f"初态方向数量 {spec.n_spins} 与自旋数 {n} 不一致")
    configs = sample_down_configurations(rng, trajectories, n)
    rotations = rotations_to_directions(spec.theta, spec.phi)
    spins = np.einsum("nab,tnb->tna", rotations, configs)

    cavity = None
    if with_cavity or spec.cavity_alpha0 is not None:
        alpha0 = spec.cavity_alpha0 if spec.cavity_alpha0 is not None else 0.0
        cavity = sample_cavity_initial(alpha0, rng, trajectories)
    return SpinEnsembleState(spins=spins, cavity=cavity, time=0.0)
