"""
精确主方程 (oracle) 与平均场参考
小系统的稠密密度矩阵 Lindblad 积分，以及只保留确定性部分的平均场方程。
基矢 |↑⟩ = (1, 0)，张量积顺序为 (自旋 1, ..., 自旋 N, 光子)。
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .hamiltonian import ModelSpec, mean_field_drift
from .integrator import TimeGrid
from .noise import cavity_loss_increment, decay_increment, dephasing_increment
from .observables import (
    AXES,
    UPPER_PAIRS,
    ObservableSeries,
    RawLayout,
    estimate_series,
    estimate_window,
    exact_raw_moments,
)
from .spins import ProductStateSpec, SpinEnsembleState
from ..exceptions import ConfigError, OracleCutoffError, OracleDimensionError, OracleIntegrityError
from ..models.schemas import DECAY_KINDS, NoiseChannelKind, NoiseChannelSpec, ObservableRequest

logger = logging.getLogger(__name__)

SIGMA_X = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128))
SIGMA_Y = sp.csr_matrix(np.array([[0.0, -1j], [1j, 0.0]], dtype=np.complex128))
SIGMA_Z = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, -1.0]], dtype=np.complex128))
SIGMA_MINUS = sp.csr_matrix(np.array([[0.0, 0.0], [1.0, 0.0]], dtype=np.complex128))
PAULI = (SIGMA_X, SIGMA_Y, SIGMA_Z)


@dataclass
class OracleTolerances:
    """oracle 数值容差"""
    trace: float = 1e-8
    hermiticity: float = 1e-10
    photon_cutoff: float = 1e-6
    rk4_stability: float = 0.5


def hilbert_dimension(n_spins: int, n_photon: int = 1) -> int:
    return (2 ** n_spins) * n_photon


def check_dimension(n_spins: int, n_photon: int, cap: int) -> int:
    """D = 2^N · n_ph 超出上限时拒绝"""
    dimension = hilbert_dimension(n_spins, n_photon)
    if dimension > cap:
        raise OracleDimensionError(dimension, cap)
    return dimension


def site_operator(op: sp.spmatrix, site: int, n_spins: int, n_photon: int = 1) -> sp.csr_matrix:
    """把单自旋算符嵌入全空间"""
    left = sp.identity(2 ** site, dtype=np.complex128, format="csr")
    right = sp.identity(2 ** (n_spins - site - 1) * n_photon, dtype=np.complex128, format="csr")
    return sp.kron(sp.kron(left, op, format="csr"), right, format="csr")


def annihilation_operator(n_spins: int, n_photon: int) -> sp.csr_matrix:
    """全空间中的光子湮灭算符 a"""
    a = sp.diags(np.sqrt(np.arange(1, n_photon)), offsets=1, dtype=np.complex128, format="csr")
    return sp.kron(sp.identity(2 ** n_spins, dtype=np.complex128, format="csr"), a, format="csr")


def default_photon_cutoff(alpha0: Optional[complex]) -> int:
    """按初始相干振幅选择截断能级数 (之后由布居检查兜底)"""
    amplitude = abs(alpha0) if alpha0 is not None else 0.0
    return max(8, int(math.ceil(amplitude ** 2 + 6.0 * amplitude + 8)))


@dataclass
class LiouvillianSpec:
    """
    Lindblad 生成元的组成部分

    collapse 中每项为 (rate, C)，耗散子为 rate·D[C]。
    """
    hamiltonian: sp.csr_matrix
    n_spins: int
    n_photon: int = 1
    collapse: List[Tuple[float, sp.csr_matrix]] = field(default_factory=list)

    def __post_init__(self):
        if any(rate < 0 for rate, _ in self.collapse):
            raise ValueError("耗散速率必须 >= 0")
        if self.n_photon != 1 and self.n_photon < 2:
            raise ValueError("有腔模时 n_ph 必须 >= 2")
        loss = sp.csr_matrix(self.hamiltonian.shape, dtype=np.complex128)
        for rate, c in self.collapse:
            loss = loss + rate * (c.conj().T @ c)
        self.effective = (self.hamiltonian - 0.5j * loss).tocsr()
        self.effective_adjoint = self.effective.conj().T.tocsr()

    @property
    def dimension(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def has_cavity(self) -> bool:
        return self.n_photon > 1

    def norm_bound(self) -> float:
        """‖L‖ 的上界估计，用于选择 RK4 子步"""
        bound = 2.0 * spla.norm(self.effective, np.inf)
        for rate, c in self.collapse:
            bound += rate * spla.norm(c, np.inf) ** 2
        return float(bound)


def build_hamiltonian(model: ModelSpec, n_photon: int = 1, detunings: Optional[np.ndarray] = None) -> sp.csr_matrix:
    """
    H = Σ_i ½ Ω_i·σ_i + Σ_{i<j} J_ij σ_i^k σ_j^k + (g/√N) Σ_i (a σ_i^+ + a† σ_i^-) + Ω_c S_x

    与经典漂移 ds/dt = Ω_eff × s 一一对应。
    """
    n = model.n_spins
    dimension = hilbert_dimension(n, n_photon)
    h = sp.csr_matrix((dimension, dimension), dtype=np.complex128)
    sites = [[site_operator(p, i, n, n_photon) for p in PAULI] for i in range(n)]

    fields = model.fields.vectors.copy()
    if detunings is not None:
        fields[:, 2] += detunings
    for i in range(n):
        for k in range(3):
            if fields[i, k] != 0.0:
                h = h + 0.5 * fields[i, k] * sites[i][k]
    for block in model.couplings:
        k = block.axis.component
        rows, cols, values = block.pairs()
        for i, j, value in zip(rows, cols, values):
            h = h + value * (sites[i][k] @ sites[j][k])
    if model.cavity is not None:
        if n_photon < 2:
            raise ValueError("含腔模的模型需要 n_ph >= 2")
        a = annihilation_operator(n, n_photon)
        scale = model.cavity.g / np.sqrt(n)
        for i in range(n):
            lowering = site_operator(SIGMA_MINUS, i, n, n_photon)
            h = h + scale * (a @ lowering.conj().T + a.conj().T @ lowering)
        if model.cavity.drive != 0.0:
            h = h + 0.5 * model.cavity.drive * sum(sites[i][0] for i in range(n))
    return h.tocsr()


def build_liouvillian(
    model: ModelSpec,
    channels: Sequence[NoiseChannelSpec],
    n_photon: int = 1,
) -> LiouvillianSpec:
    """
    由模型与通道构建 Lindblad 生成元

    个体退相位 Γφ/2·D[σ_i^z]，集体退相位 2Γφ^C·D[S_z]，衰减 Γ·D[σ_i^-]，腔损耗 2κ·D[a]。
    三种衰减形式对应同一个主方程。

    Raises:
        ConfigError: 色噪声退相位或逐轨迹重采样的无序无法精确表示
    """
    if model.disorder_sigma2 > 0 and not model.disorder_frozen:
        raise ConfigError("oracle 需要冻结无序 (disorder.frozen = true)", ["model.disorder.frozen"])
    if model.cavity is None:
        n_photon = 1
    n = model.n_spins
    detunings = model.frozen_detunings if model.disorder_frozen else None
    hamiltonian = build_hamiltonian(model, n_photon, detunings)

    collapse: List[Tuple[float, sp.csr_matrix]] = []
    for channel in channels:
        kind = channel.kind
        if kind == NoiseChannelKind.DEPHASING_COLORED:
            raise ConfigError("oracle 不支持色噪声退相位", ["noise.kind"])
        if channel.rate == 0:
            continue
        if kind == NoiseChannelKind.DEPHASING_INDIVIDUAL:
            collapse.extend((0.5 * channel.rate, site_operator(SIGMA_Z, i, n, n_photon)) for i in range(n))
        elif kind == NoiseChannelKind.DEPHASING_COLLECTIVE:
            s_z = 0.5 * sum(site_operator(SIGMA_Z, i, n, n_photon) for i in range(n))
            collapse.append((2.0 * channel.rate, s_z.tocsr()))
        elif kind in DECAY_KINDS:
            collapse.extend((channel.rate, site_operator(SIGMA_MINUS, i, n, n_photon)) for i in range(n))
        elif kind == NoiseChannelKind.CAVITY_LOSS:
            collapse.append((2.0 * channel.rate, annihilation_operator(n, n_photon)))
    return LiouvillianSpec(hamiltonian=hamiltonian, n_spins=n, n_photon=n_photon, collapse=collapse)


@dataclass
class DensityMatrix:
    """稠密密度矩阵"""
    data: np.ndarray
    time: float = 0.0

    @property
    def dimension(self) -> int:
        return self.data.shape[0]

    def trace(self) -> complex:
        return complex(np.trace(self.data))

    def hermiticity_error(self) -> float:
        """‖ρ - ρ†‖_F / ‖ρ‖_F"""
        norm = np.linalg.norm(self.data)
        return float(np.linalg.norm(self.data - self.data.conj().T) / norm) if norm > 0 else 0.0

    def purity(self) -> float:
        return float(np.real(np.vdot(self.data.conj().T, self.data)))

    def expectation(self, operator: sp.spmatrix) -> complex:
        """Tr(O ρ)"""
        return complex(operator.multiply(self.data.T).sum())


def initial_density_matrix(initial: ProductStateSpec, n_photon: int = 1) -> DensityMatrix:
    """乘积态 ⊗_i [cos(θ/2)|↑⟩ + e^{iφ} sin(θ/2)|↓⟩] ⊗ |α0⟩ (截断相干态)"""
    psi = np.ones(1, dtype=np.complex128)
    for theta, phi in zip(initial.theta, initial.phi):
        local = np.array([np.cos(theta / 2.0), np.exp(1j * phi) * np.sin(theta / 2.0)])
        psi = np.kron(psi, local)
    if n_photon > 1:
        alpha = initial.cavity_alpha0 if initial.cavity_alpha0 is not None else 0.0
        levels = np.arange(n_photon)
        log_norm = np.array([math.lgamma(k + 1) for k in levels])
        photon = np.exp(-0.5 * abs(alpha) ** 2 - 0.5 * log_norm) * np.power(complex(alpha), levels)
        photon /= np.linalg.norm(photon)
        psi = np.kron(psi, photon)
    return DensityMatrix(np.outer(psi, psi.conj()))


def apply_liouvillian(rho, spec: LiouvillianSpec) -> np.ndarray:
    """
    dρ/dt = -i(H_eff ρ - ρ H_eff†) + Σ rate·C ρ C†，H_eff = H - (i/2) Σ rate·C†C

    不显式构造 D²×D² 超算符。
    """
    data = rho.data if isinstance(rho, DensityMatrix) else rho
    if data.shape != (spec.dimension, spec.dimension):
        raise ValueError(f"密度矩阵维数 {data.shape} 与生成元维数 {spec.dimension} 不一致")
    left = spec.effective @ data
    right = (spec.effective_adjoint.T @ data.T).T
    out = -1j * (left - right)
    for rate, c in spec.collapse:
        out += rate * (c @ (c @ data.conj().T).conj().T)
    return out


def photon_populations(rho: DensityMatrix, spec: LiouvillianSpec) -> np.ndarray:
    """光子数分布 P(n)"""
    diagonal = np.real(np.diagonal(rho.data))
    return diagonal.reshape(2 ** spec.n_spins, spec.n_photon).sum(axis=0)


def check_photon_cutoff(rho: DensityMatrix, spec: LiouvillianSpec, tolerance: float):
    """最高两个 Fock 能级布居超过容差时中止"""
    if not spec.has_cavity:
        return
    populations = photon_populations(rho, spec)
    top = float(populations[-2:].sum())
    if top > tolerance:
        raise OracleCutoffError(
            f"t={rho.time:.6g} 时最高两个光子能级布居 {top:.3e} 超过 {tolerance:.1e}，请增大 photon_cutoff (当前 {spec.n_photon})"
        )


class ExpectationOperators:
    """记录观测量所需的算符集合"""

    def __init__(self, spec: LiouvillianSpec, layout: RawLayout, per_spin: bool):
        n = spec.n_spins
        n_photon = spec.n_photon
        self.layout = layout
        self.sites = [[site_operator(p, i, n, n_photon) for p in PAULI] for i in range(n)]
        self.collective = [0.5 * sum(self.sites[i][k] for i in range(n)).tocsr() for k in range(3)]
        self.products = [(self.collective[k] @ self.collective[l]).tocsr() for k, l in UPPER_PAIRS]
        self.pairs = [
            (self.sites[p.i][AXES.index(p.k)] @ self.sites[p.j][AXES.index(p.l)]).tocsr() for p in layout.pairs
        ]
        self.per_spin = per_spin
        self.cavity = None
        if spec.has_cavity:
            a = annihilation_operator(n, n_photon)
            number = (a.conj().T @ a).tocsr()
            self.cavity = (a, number, (a.conj().T @ number @ a).tocsr())

    def measure(self, rho: DensityMatrix) -> Tuple[np.ndarray, np.ndarray, np.ndarray, Optional[np.ndarray], Optional[np.ndarray]]:
        first = np.array([rho.expectation(op).real for op in self.collective])
        second = np.empty((3, 3))
        for (k, l), op in zip(UPPER_PAIRS, self.products):
            value = rho.expectation(op).real
            second[k, l] = second[l, k] = value
        pairs = np.array([rho.expectation(op).real for op in self.pairs])
        cavity = None
        if self.cavity is not None:
            a, number, pair_number = self.cavity
            amplitude = rho.expectation(a)
            cavity = np.array([amplitude.real, amplitude.imag, rho.expectation(number).real,
                               rho.expectation(pair_number).real])
        spins = None
        if self.per_spin:
            spins = np.array([[rho.expectation(op).real for op in site] for site in self.sites])
        return first, second, pairs, cavity, spins


def rk4_step(data: np.ndarray, spec: LiouvillianSpec, h: float) -> np.ndarray:
    k1 = apply_liouvillian(data, spec)
    k2 = apply_liouvillian(data + 0.5 * h * k1, spec)
    k3 = apply_liouvillian(data + 0.5 * h * k2, spec)
    k4 = apply_liouvillian(data + h * k3, spec)
    return data + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def propagate_density_matrix(
    rho0: DensityMatrix,
    spec: LiouvillianSpec,
    grid: TimeGrid,
    tolerances: Optional[OracleTolerances] = None,
) -> Iterator[DensityMatrix]:
    """
    固定步长 RK4 推进 ρ，依次产出每个记录点的密度矩阵 (含 t = 0)

    每个 dt 分为 m 个子步，使 h·‖L‖ <= rk4_stability。产出前检查迹、厄米性与光子截断。

    Raises:
        OracleIntegrityError: 迹或厄米性漂移超出容差
        OracleCutoffError: 光子截断能级布居超出容差
    """
    tolerances = tolerances or OracleTolerances()
    substeps = max(1, int(math.ceil(grid.dt * spec.norm_bound() / tolerances.rk4_stability)))
    h = grid.dt / substeps
    logger.info(f"oracle 积分开始: D={spec.dimension}, 步数={grid.n_steps}, 每步子步数={substeps}")

    rho = DensityMatrix(rho0.data.astype(np.complex128, copy=True), 0.0)
    _check_integrity(rho, grid, tolerances)
    check_photon_cutoff(rho, spec, tolerances.photon_cutoff)
    yield rho
    data = rho.data
    for step in range(1, grid.n_steps + 1):
        for _ in range(substeps):
            data = rk4_step(data, spec, h)
        if step % grid.output_stride == 0:
            rho = DensityMatrix(data, step * grid.dt)
            _check_integrity(rho, grid, tolerances)
            check_photon_cutoff(rho, spec, tolerances.photon_cutoff)
            yield rho


def evolve_master_equation(
    rho0: DensityMatrix,
    spec: LiouvillianSpec,
    grid: TimeGrid,
    request: ObservableRequest,
    epsilon: float = 1e-6,
    photon_floor: float = 1e-3,
    tolerances: Optional[OracleTolerances] = None,
    window_start: Optional[int] = None,
) -> ObservableSeries:
    """
    积分主方程并记录与随机引擎相同的观测量

    Args:
        rho0: 初始密度矩阵
        spec: 生成元
        grid: 时间网格 (与随机引擎共用)
        request: 观测量请求
        epsilon: 压缩参数的 |⟨S⟩| 下限系数
        photon_floor: g²(0) 的光子数下限
        tolerances: 数值容差
        window_start: 稳态窗口起点 (记录点下标)

    Returns:
        ObservableSeries, 标准误差为 0
    """
    tolerances = tolerances or OracleTolerances()
    layout = RawLayout(spec.n_spins, spec.has_cavity, list(request.pair_correlations))
    operators = ExpectationOperators(spec, layout, request.per_spin_means)

    records = []
    rho = rho0
    for rho in propagate_density_matrix(rho0, spec, grid, tolerances):
        records.append(operators.measure(rho))

    first = np.array([r[0] for r in records])
    second = np.array([r[1] for r in records])
    pairs = np.array([r[2] for r in records]) if layout.pairs else None
    cavity = np.array([r[3] for r in records]) if spec.has_cavity else None
    mean = exact_raw_moments(layout, first, second, pairs, cavity)
    spin_mean = np.array([r[4] for r in records]) if request.per_spin_means else None

    series = estimate_series(
        layout, request, grid.output_times, mean, None, 1, epsilon, photon_floor,
        spin_mean=spin_mean, exact=True,
    )
    if window_start is not None:
        window_mean = mean[window_start:].mean(axis=0, keepdims=True)
        series.steady_state = estimate_window(layout, request, window_mean, None, 1, epsilon, photon_floor, exact=True)
    logger.info(f"oracle 积分完成: 最终纯度 {rho.purity():.6f}")
    return series


def _check_integrity(rho: DensityMatrix, grid: TimeGrid, tolerances: OracleTolerances):
    trace_error = abs(rho.trace() - 1.0)
    if trace_error > tolerances.trace:
        raise OracleIntegrityError(
            f"t={rho.time:.6g} 时迹偏离 {trace_error:.3e} 超过 {tolerances.trace:.1e}，请减小 dt (当前 {grid.dt:.3g})"
        )
    hermiticity = rho.hermiticity_error()
    if hermiticity > tolerances.hermiticity:
        raise OracleIntegrityError(
            f"t={rho.time:.6g} 时厄米性偏离 {hermiticity:.3e} 超过 {tolerances.hermiticity:.1e}，请减小 dt (当前 {grid.dt:.3g})"
        )


# ==================== 平均场参考 ====================

def deterministic_rates(
    state: SpinEnsembleState,
    model: ModelSpec,
    channels: Sequence[NoiseChannelSpec],
    detunings: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """漂移加上各通道的确定性阻尼项 (所有 dW = 0，色噪声取其均值 0)"""
    ds, dalpha = mean_field_drift(state, model, detunings)
    zero = np.zeros(state.spins.shape[:-1])
    for channel in channels:
        if channel.kind in (NoiseChannelKind.DEPHASING_INDIVIDUAL, NoiseChannelKind.DEPHASING_COLLECTIVE):
            ds = ds + dephasing_increment(state.spins, channel.rate, 1.0, zero)
        elif channel.kind in DECAY_KINDS:
            ds = ds + decay_increment(state.spins, channel.rate, 1.0, zero)
        elif channel.kind == NoiseChannelKind.CAVITY_LOSS:
            dalpha = dalpha + cavity_loss_increment(state.cavity, channel.rate, 1.0, np.zeros(state.cavity.shape))
    return ds, dalpha


def mean_field_reference(
    model: ModelSpec,
    channels: Sequence[NoiseChannelSpec],
    grid: TimeGrid,
    initial: ProductStateSpec,
    request: ObservableRequest,
    epsilon: float = 1e-6,
    photon_floor: float = 1e-3,
    window_start: Optional[int] = None,
) -> ObservableSeries:
    """
    平均场参考解

    从量子初始均值 (单位 Bloch 向量, α0) 出发，用 RK4 积分确定性方程，不做采样。
    集体量按乘积态计算; 光子矩按相干态换算。
    """
    if model.disorder_sigma2 > 0 and not model.disorder_frozen:
        raise ConfigError("平均场参考需要冻结无序 (disorder.frozen = true)", ["model.disorder.frozen"])
    detunings = model.frozen_detunings[None] if model.disorder_frozen else None
    cavity = None
    if model.has_cavity:
        alpha0 = initial.cavity_alpha0 if initial.cavity_alpha0 is not None else 0.0
        cavity = np.array([complex(alpha0)])
    state = SpinEnsembleState(initial.directions()[None].copy(), cavity, 0.0)
    layout = RawLayout(model.n_spins, model.has_cavity, list(request.pair_correlations))

    def rates(s: np.ndarray, alpha: Optional[np.ndarray]):
        return deterministic_rates(SpinEnsembleState(s, alpha), model, channels, detunings)

    records = [_mean_field_raw(state, layout)]
    spins_record = [state.spins[0].copy()]
    s, alpha = state.spins, state.cavity
    h = grid.dt
    for step in range(1, grid.n_steps + 1):
        k1 = rates(s, alpha)
        k2 = rates(s + 0.5 * h * k1[0], None if alpha is None else alpha + 0.5 * h * k1[1])
        k3 = rates(s + 0.5 * h * k2[0], None if alpha is None else alpha + 0.5 * h * k2[1])
        k4 = rates(s + h * k3[0], None if alpha is None else alpha + h * k3[1])
        s = s + (h / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        if alpha is not None:
            alpha = alpha + (h / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        if step % grid.output_stride == 0:
            current = SpinEnsembleState(s, alpha, step * h)
            records.append(_mean_field_raw(current, layout))
            spins_record.append(s[0].copy())

    mean = np.array(records)
    spin_mean = np.array(spins_record) if request.per_spin_means else None
    series = estimate_series(
        layout, request, grid.output_times, mean, None, 1, epsilon, photon_floor,
        spin_mean=spin_mean, exact=True,
    )
    if window_start is not None:
        window_mean = mean[window_start:].mean(axis=0, keepdims=True)
        series.steady_state = estimate_window(layout, request, window_mean, None, 1, epsilon, photon_floor, exact=True)
    return series


def _mean_field_raw(state: SpinEnsembleState, layout: RawLayout) -> np.ndarray:
    raw = layout.raw(state)[0]
    if layout.has_cavity:
        number = abs(state.cavity[0]) ** 2
        raw[17] = number + 0.5
        raw[18] = number ** 2 + 2.0 * number + 0.5
    return raw
