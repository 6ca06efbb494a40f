# -*- coding: utf-8 -*-
"""Pipeline

完整方法及其四种消融变体::

    vol ─┬─ vessel_enhance(σ_l) ── hysteresis(0.57, 0.67) ─┐
         └─ vessel_enhance(σ_u) ── hysteresis(0.39, 0.49) ─┴─ union ── filter_small(10mm³)

顺序固定：先求并集，再做连通分量过滤。
输入须已做颅骨剥离和偏置场校正，本模块不做检查。
"""

import time
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from pathlib import Path
from typing import Sequence

from mravessel.components import filter_small, label_components
from mravessel.filters import SatoParams, VesselnessMap, vessel_enhance
from mravessel.libs import (
    BinaryMask,
    EmptySelection,
    EvalReport,
    InvalidParameter,
    PipelineConfig,
    Volume3D,
    WriteFailure,
    write_nifti,
)
from mravessel.phantom import TubeMask, evaluate
from mravessel.threshold import (
    ThresholdPair,
    hysteresis,
    relative_thresholds,
    simple_threshold,
    threshold_grid,
    union_masks,
)
from mravessel.utils import format_fraction, get_logger

__all__ = [
    'BRANCHES',
    'AblationVariant',
    'BranchResult',
    'Pipeline',
    'SegmentationResult',
    'run_ablation',
    'segment',
    'segment_ablated',
    'sweep_thresholds',
]

# 小尺度分支在前，合并顺序固定
BRANCHES = ('low', 'high')


class AblationVariant(str, Enum):
    FULL = 'full'
    NO_SIGMA_LOW = 'no_sigma_low'
    NO_SIGMA_HIGH = 'no_sigma_high'
    NO_HYSTERESIS = 'no_hysteresis'
    NO_COMPONENTS = 'no_components'

    def branches(self) -> tuple[str, ...]:
        if self is AblationVariant.NO_SIGMA_LOW:
            return 'high',
        if self is AblationVariant.NO_SIGMA_HIGH:
            return 'low',
        return BRANCHES


class BranchResult:
    """One scale branch: vesselness map, thresholds and thresholded mask"""

    __slots__ = ('name', 'vmap', 'thresholds', 'mask')

    def __init__(
        self,
        name: str,
        vmap: VesselnessMap,
        thresholds: ThresholdPair | None,
        mask: BinaryMask,
    ):
        """

        :param name: 'low' 或 'high'
        :param vmap:
        :param thresholds: 该尺度没有正响应时为None
        :param mask:
        """
        self.name = name
        self.vmap = vmap
        self.thresholds = thresholds
        self.mask = mask

    def __repr__(self):
        return f"<BranchResult {self.name} σ={self.vmap.scale_mm}mm {self.thresholds} voxels={self.mask.count}>"


class SegmentationResult:
    __slots__ = ('mask', 'variant', 'branches', 'components_kept', 'components_removed', 'elapsed')

    def __init__(
        self,
        mask: BinaryMask,
        variant: AblationVariant,
        branches: dict[str, BranchResult],
        components_kept: int,
        components_removed: int,
        elapsed: float = 0.0,
    ):
        self.mask = mask
        self.variant = variant
        self.branches = branches
        self.components_kept = components_kept
        self.components_removed = components_removed
        self.elapsed = elapsed

    def __repr__(self):
        return f"<SegmentationResult {self.variant.value} voxels={self.mask.count} K={self.components_kept}>"

    def summary(self) -> str:
        """单行摘要：体素数、分量数、各分支阈值"""
        parts = [
            f"variant={self.variant.value}",
            f"voxels={self.mask.count}",
            f"components={self.components_kept}",
            f"removed={self.components_removed}",
        ]
        for name, branch in self.branches.items():
            th = branch.thresholds
            if th is None:
                parts.append(f"{name}=none")
            else:
                parts.append(f"{name}=[LTV={th.low:.6g} HTV={th.high:.6g}]")
        return ' '.join(parts)


class Pipeline:
    """Dual-scale vessel segmentation"""

    def __init__(
        self,
        config: PipelineConfig | None = None,
        *,
        workers: int = 1,
        save_intermediates: Path | str | None = None,
        log_level: int = 20,
    ):
        """

        :param config: 为None时使用默认参数
        :param workers: 线程数，>1时两个尺度分支并行
        :param save_intermediates: 保存vesselness图和各分支掩膜的目录
        :param log_level:
        """
        self.config = config or PipelineConfig()
        if workers < 1:
            raise InvalidParameter(f"workers must be >= 1, got {workers}")
        self.workers = workers
        self.save_intermediates = Path(save_intermediates) if save_intermediates else None
        self.logger = get_logger(self.__class__.__name__, log_level=log_level)

    def __repr__(self):
        return f"<Pipeline workers={self.workers}>"

    @property
    def sato_params(self) -> SatoParams:
        cfg = self.config
        return SatoParams(cfg.gamma23, cfg.gamma12, cfg.alpha, cfg.scale_normalized)

    def sigma(self, branch: str) -> float:
        return self.config.sigma_low_mm if branch == 'low' else self.config.sigma_high_mm

    def fractions(self, branch: str) -> tuple[float, float]:
        return self.config.frac_low_scale if branch == 'low' else self.config.frac_high_scale

    @staticmethod
    def _check_input(vol: Volume3D):
        if not vol.has_positive():
            raise EmptySelection(f"{vol} has no positive voxels.")

    def enhance(self, vol: Volume3D, branches: Sequence[str] = BRANCHES) -> dict[str, VesselnessMap]:
        """计算各分支的vesselness图，结果按分支顺序返回"""
        params = self.sato_params

        def _enhance(branch: str) -> VesselnessMap:
            self.logger.debug(f"enhance {branch}: σ={self.sigma(branch)}mm")
            return vessel_enhance(vol, self.sigma(branch), params, workers=self.workers)

        if self.workers > 1 and len(branches) > 1:
            with ThreadPoolExecutor(max_workers=len(branches)) as pool:
                futures = [pool.submit(_enhance, _) for _ in branches]
                vmaps = [_.result() for _ in futures]
        else:
            vmaps = [_enhance(_) for _ in branches]
        return dict(zip(branches, vmaps))

    def _threshold(self, branch: str, vmap: VesselnessMap, use_hysteresis: bool) -> BranchResult:
        cfg = self.config
        if not vmap.has_positive():
            self.logger.warning(f"Branch {branch} (σ={vmap.scale_mm}mm) has no positive vesselness.")
            return BranchResult(branch, vmap, None, BinaryMask.empty(vmap))

        low_frac, high_frac = self.fractions(branch)
        th = relative_thresholds(
            vmap,
            low_frac,
            high_frac,
            p=cfg.percentile,
            restrict_to_positive=cfg.restrict_to_positive,
        )
        if use_hysteresis:
            mask = hysteresis(vmap, th, cfg.connectivity)
        else:
            mask = simple_threshold(vmap, th.high)
        self.logger.info(f"Branch {branch}: anchor={th.anchor:.6g} {th} voxels={mask.count}")
        return BranchResult(branch, vmap, th, mask)

    def run(
        self,
        vol: Volume3D,
        variant: AblationVariant | str = AblationVariant.FULL,
        *,
        vmaps: dict[str, VesselnessMap] | None = None,
    ) -> SegmentationResult:
        """执行完整方法或某个消融变体

        :param vol: 颅骨剥离、偏置场校正后的体数据
        :param variant:
        :param vmaps: 预先计算的vesselness图，消融实验中各变体共享
        :return:
        :raise EmptySelection: 输入没有正值体素
        """
        variant = AblationVariant(variant)
        start = time.perf_counter()
        self._check_input(vol)
        self.logger.info(f"Start Pipeline({variant.value}) on {vol}")

        branches = variant.branches()
        vmaps = dict(vmaps or {})
        missing = [_ for _ in branches if _ not in vmaps]
        if missing:
            vmaps.update(self.enhance(vol, missing))

        use_hysteresis = variant is not AblationVariant.NO_HYSTERESIS
        results = {_: self._threshold(_, vmaps[_], use_hysteresis) for _ in branches}

        merged = None
        for branch in branches:
            mask = results[branch].mask
            merged = mask if merged is None else union_masks(merged, mask)

        lab = label_components(merged, self.config.connectivity)
        if variant is AblationVariant.NO_COMPONENTS:
            final, kept = merged, lab.n_components
        else:
            final = filter_small(lab, self.config.min_component_mm3)
            kept = int((lab.volumes_mm3 >= self.config.min_component_mm3).sum())

        result = SegmentationResult(
            final,
            variant,
            results,
            kept,
            lab.n_components - kept,
            time.perf_counter() - start,
        )
        self.logger.info(f"Pipeline({variant.value}) done in {result.elapsed:.2f}s: {result.summary()}")
        if self.save_intermediates:
            self.write_intermediates(result, merged)
        return result

    def write_intermediates(self, result: SegmentationResult, merged: BinaryMask):
        """vesselness_<branch>.nii.gz, <variant>_<branch>.nii.gz, <variant>_union.nii.gz"""
        outdir = self.save_intermediates
        try:
            outdir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise WriteFailure(f"Unable to create '{outdir}': {e}")
        prefix = result.variant.value
        for name, branch in result.branches.items():
            write_nifti(branch.vmap, outdir / f"vesselness_{name}.nii.gz")
            write_nifti(branch.mask, outdir / f"{prefix}_{name}.nii.gz")
        write_nifti(merged, outdir / f"{prefix}_union.nii.gz")
        self.logger.debug(f"Intermediates written to {outdir}")

    def segment(self, vol: Volume3D) -> BinaryMask:
        return self.run(vol).mask

    def run_ablation(
        self,
        vol: Volume3D,
        gt: BinaryMask | None = None,
        tube_masks: Sequence[TubeMask] = (),
    ) -> dict[AblationVariant, tuple[BinaryMask, EvalReport | None]]:
        """依次运行全部五种变体，共享两幅vesselness图；给出gt时同时评价"""
        self._check_input(vol)
        vmaps = self.enhance(vol)
        outcome = {}
        for variant in AblationVariant:
            mask = self.run(vol, variant, vmaps=vmaps).mask
            report = None
            if gt is not None:
                report = evaluate(mask, gt, tube_masks, connectivity=self.config.connectivity, name=variant.value)
            outcome[variant] = (mask, report)
        return outcome

    def sweep(
        self,
        vol: Volume3D,
        branch: str,
        pairs: Sequence[tuple[float, float]] | None = None,
    ) -> list[tuple[ThresholdPair, BinaryMask]]:
        """单个分支在多组阈值比例下的滞后阈值结果(不求并集，不过滤分量)

        :param vol:
        :param branch: 'low' 或 'high'
        :param pairs: 比例对，默认为该分支配置比例附近的 threshold_grid
        :return:
        """
        if branch not in BRANCHES:
            raise InvalidParameter(f"branch must be one of {BRANCHES}, got {branch!r}")
        self._check_input(vol)
        cfg = self.config
        pairs = list(pairs) if pairs is not None else threshold_grid(self.fractions(branch))
        vmap = self.enhance(vol, (branch,))[branch]
        if not vmap.has_positive():
            raise EmptySelection(f"Branch {branch} has no positive vesselness.")

        outcome = []
        for low_frac, high_frac in pairs:
            th = relative_thresholds(
                vmap,
                low_frac,
                high_frac,
                p=cfg.percentile,
                restrict_to_positive=cfg.restrict_to_positive,
            )
            mask = hysteresis(vmap, th, cfg.connectivity)
            self.logger.info(
                f"sweep {branch} L{format_fraction(low_frac)} H{format_fraction(high_frac)}: voxels={mask.count}"
            )
            outcome.append((th, mask))
        return outcome


def segment(vol: Volume3D, cfg: PipelineConfig | None = None, *, workers: int = 1) -> BinaryMask:
    return Pipeline(cfg, workers=workers).segment(vol)


def segment_ablated(
    vol: Volume3D,
    cfg: PipelineConfig | None,
    variant: AblationVariant | str,
    *,
    workers: int = 1,
) -> BinaryMask:
    return Pipeline(cfg, workers=workers).run(vol, variant).mask


def run_ablation(
    vol: Volume3D,
    cfg: PipelineConfig | None = None,
    gt: BinaryMask | None = None,
    tube_masks: Sequence[TubeMask] = (),
    *,
    workers: int = 1,
) -> dict[AblationVariant, tuple[BinaryMask, EvalReport | None]]:
    return Pipeline(cfg, workers=workers).run_ablation(vol, gt, tube_masks)


def sweep_thresholds(
    vol: Volume3D,
    cfg: PipelineConfig | None,
    branch: str,
    pairs: Sequence[tuple[float, float]] | None = None,
    *,
    workers: int = 1,
) -> list[tuple[ThresholdPair, BinaryMask]]:
    return Pipeline(cfg, workers=workers).sweep(vol, branch, pairs)
