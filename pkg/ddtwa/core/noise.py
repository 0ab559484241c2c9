"""
耗散通道的随机增量
所有函数都对最后一维为 (x, y, z) 的数组向量化，dW 与 s[..., 0] 可广播。
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np


def dephasing_increment(s: np.ndarray, gamma_phi: float, dt: float, dW: np.ndarray) -> np.ndarray:
    """
    退相位 (个体或集体) 的 Ito 增量

    ds^x = -Γφ s^x dt - √(2Γφ) s^y dW
    ds^y = -Γφ s^y dt + √(2Γφ) s^x dW
    ds^z = 0

    集体退相位时调用方为所有自旋传入同一个 dW。
    离散步长下 s_⊥² 的期望每步增长 Γφ² dt² (见 dephasing_length_drift)。
    """
    s = np.asarray(s, dtype=np.float64)
    noise = np.sqrt(2.0 * gamma_phi) * np.asarray(dW)
    ds = np.zeros_like(s)
    ds[..., 0] = -gamma_phi * s[..., 0] * dt - noise * s[..., 1]
    ds[..., 1] = -gamma_phi * s[..., 1] * dt + noise * s[..., 0]
    return ds


def dephasing_length_drift(gamma_phi: float, dt: float, t_end: float) -> float:
    """
    显式 Euler-Maruyama 退相位在 t_end 内对横向长度 s_⊥² 造成的相对漂移

    每步 E[s_⊥²'] = s_⊥² (1 + Γφ² dt²)，累计 (1 + Γφ² dt²)^(t_end/dt) - 1 ≈ Γφ² dt t_end。
    连续极限下该漂移为零。
    """
    if dt <= 0 or t_end < 0:
        raise ValueError("dt 必须 > 0 且 t_end >= 0")
    return float(np.expm1((t_end / dt) * np.log1p((gamma_phi * dt) ** 2)))


@dataclass
class OUState:
    """Ornstein-Uhlenbeck 噪声值 ξ_i (速率单位)，集体噪声时最后一维长度为 1"""
    xi: np.ndarray

    @property
    def n_processes(self) -> int:
        return self.xi.shape[-1]


def ou_initialize(sigma: float, normals: np.ndarray) -> OUState:
    """从平稳分布 N(0, σ²) 初始化"""
    return OUState(xi=sigma * np.asarray(normals, dtype=np.float64))


def ou_step(state: OUState, tau_c: float, sigma: float, dt: float, d_eta: np.ndarray) -> OUState:
    """
    ξ ← ξ - (ξ/τ_c) dt + √(2/τ_c) σ dη

    Args:
        state: 当前噪声值
        tau_c: 关联时间 (> 0)
        sigma: 噪声强度
        dt: 时间步长
        d_eta: Wiener 增量, 方差 dt

    Returns:
        新的 OUState
    """
    if tau_c <= 0:
        raise ValueError("tau_c 必须 > 0")
    xi = state.xi - (state.xi / tau_c) * dt + np.sqrt(2.0 / tau_c) * sigma * np.asarray(d_eta)
    return OUState(xi=xi)


def colored_dephasing_drift(s: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """绕 z 轴以涨落频率 ξ 转动: ξ (e_z × s) = (-ξ s^y, ξ s^x, 0)"""
    s = np.asarray(s, dtype=np.float64)
    xi = np.asarray(xi)
    drift = np.zeros_like(s)
    drift[..., 0] = -xi * s[..., 1]
    drift[..., 1] = xi * s[..., 0]
    return drift


def decay_increment(s: np.ndarray, gamma: float, dt: float, dW: np.ndarray) -> np.ndarray:
    """
    自发衰减 (标准形式)

    ds^x = -(Γ/2) s^x dt - √Γ s^y dW
    ds^y = -(Γ/2) s^y dt + √Γ s^x dW
    ds^z = -Γ (s^z + 1) dt + √Γ (s^z + 1) dW
    """
    s = np.asarray(s, dtype=np.float64)
    noise = np.sqrt(gamma) * np.asarray(dW)
    lifted = s[..., 2] + 1.0
    ds = np.empty_like(s)
    ds[..., 0] = -0.5 * gamma * s[..., 0] * dt - noise * s[..., 1]
    ds[..., 1] = -0.5 * gamma * s[..., 1] * dt + noise * s[..., 0]
    ds[..., 2] = -gamma * lifted * dt + noise * lifted
    return ds


def decay_increment_improved(
    s: np.ndarray, gamma: float, dt: float, dW1: np.ndarray, dW2: np.ndarray
) -> np.ndarray:
    """
    自发衰减 (两路噪声的改进形式，三个分量更对称地出现在长度变化中)

    确定性部分与 decay_increment 相同。
    """
    s = np.asarray(s, dtype=np.float64)
    dW1 = np.asarray(dW1)
    dW2 = np.asarray(dW2)
    half_root = 0.5 * np.sqrt(gamma)
    ds = np.empty_like(s)
    ds[..., 0] = -0.5 * gamma * s[..., 0] * dt - half_root * ((s[..., 1] + 1.0) * dW1 + (s[..., 1] - 1.0) * dW2)
    ds[..., 1] = -0.5 * gamma * s[..., 1] * dt + half_root * ((s[..., 0] + 1.0) * dW1 + (s[..., 0] - 1.0) * dW2)
    ds[..., 2] = -gamma * (s[..., 2] + 1.0) * dt + np.sqrt(0.5 * gamma) * (s[..., 2] + 1.0) * (dW1 - dW2)
    return ds


def decay_increment_qle(
    s: np.ndarray, gamma: float, dt: float, dW1: np.ndarray, dW2: np.ndarray
) -> np.ndarray:
    """
    量子 Langevin 方程直接经典化得到的衰减增量

    仅用于对比研究: 不保持自旋长度, E[d s²] = -2Γ s^z dt。
    """
    s = np.asarray(s, dtype=np.float64)
    dW1 = np.asarray(dW1)
    dW2 = np.asarray(dW2)
    root = np.sqrt(gamma)
    ds = np.empty_like(s)
    ds[..., 0] = -0.5 * gamma * s[..., 0] * dt + root * s[..., 2] * dW1
    ds[..., 1] = -0.5 * gamma * s[..., 1] * dt - root * s[..., 2] * dW2
    ds[..., 2] = -gamma * (s[..., 2] + 1.0) * dt - root * (s[..., 0] * dW1 - s[..., 1] * dW2)
    return ds


def cavity_loss_increment(
    alpha: np.ndarray, kappa: float, dt: float, dW1: np.ndarray, dW2: Optional[np.ndarray] = None
) -> np.ndarray:
    """腔损耗: dα = -κ α dt + √(κ/2) (dW1 + i dW2)"""
    alpha = np.asarray(alpha, dtype=np.complex128)
    dW2 = np.zeros_like(np.asarray(dW1, dtype=np.float64)) if dW2 is None else np.asarray(dW2)
    return -kappa * alpha * dt + np.sqrt(0.5 * kappa) * (np.asarray(dW1) + 1j * dW2)


def expected_length_change(s: np.ndarray, kind: str, rate: float, dt: float) -> np.ndarray:
    """
    单步 E[d(s²)] 的解析表达式 (用于长度诊断)

    kind 取 dephasing / decay_standard / decay_improved / decay_qle。
    """
    s = np.asarray(s, dtype=np.float64)
    if kind == "dephasing":
        return np.zeros(s.shape[:-1])
    if kind == "decay_standard":
        return rate * (1.0 - s[..., 2] ** 2) * dt
    if kind == "decay_improved":
        return 0.5 * rate * (4.0 - s[..., 0] ** 2 - s[..., 1] ** 2 - 2.0 * s[..., 2] ** 2) * dt
    if kind == "decay_qle":
        return -2.0 * rate * s[..., 2] * dt
    raise ValueError(f"未知的通道类型: {kind}")
