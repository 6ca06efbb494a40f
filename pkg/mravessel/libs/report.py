"""Evaluation report

扁平的 key = value 文本，每行一个指标，便于在CI中diff。
"""

from pathlib import Path

try:
    import ujson as json
except ImportError:
    import json

__all__ = [
    'TubeScores',
    'EvalReport',
]


class TubeScores(dict):
    """Per-tube dice keyed by tube radius (mm)"""

    @staticmethod
    def key(radius_mm: float) -> str:
        return f"r{radius_mm:.2f}"


class EvalReport:
    """Automated segmentation quality metrics"""

    __slots__ = (
        'dice',
        'sensitivity',
        'false_positive_voxel_fraction',
        'component_count_pred',
        'component_count_gt',
        'tube_dice',
        'name',
        'rng_algorithm',
    )

    def __init__(
        self,
        dice: float,
        sensitivity: float,
        false_positive_voxel_fraction: float,
        component_count_pred: int,
        component_count_gt: int,
        tube_dice: TubeScores | None = None,
        *,
        name: str | None = None,
        rng_algorithm: str | None = None,
    ):
        """

        :param dice: 2|P∩G| / (|P|+|G|)
        :param sensitivity: |P∩G| / |G|
        :param false_positive_voxel_fraction: |P\\G| / |P|
        :param component_count_pred: 预测掩膜的连通分量数
        :param component_count_gt: 真值掩膜的连通分量数
        :param tube_dice: 每根管道的dice
        :param name: 报告名称，例如消融变体
        :param rng_algorithm: 生成体模噪声的随机数算法
        """
        for k, v in (('dice', dice), ('sensitivity', sensitivity),
                     ('false_positive_voxel_fraction', false_positive_voxel_fraction)):
            assert 0.0 <= v <= 1.0, f"Expected {k} in [0, 1], got {v}"
        self.dice = float(dice)
        self.sensitivity = float(sensitivity)
        self.false_positive_voxel_fraction = float(false_positive_voxel_fraction)
        self.component_count_pred = int(component_count_pred)
        self.component_count_gt = int(component_count_gt)
        self.tube_dice = tube_dice or TubeScores()
        self.name = name
        self.rng_algorithm = rng_algorithm

    def __repr__(self):
        return f"<EvalReport {self.name or ''} dice={self.dice:.4f}>"

    def as_dict(self) -> dict:
        d = {}
        if self.name:
            d['name'] = self.name
        d.update(
            dice=self.dice,
            sensitivity=self.sensitivity,
            false_positive_voxel_fraction=self.false_positive_voxel_fraction,
            component_count_pred=self.component_count_pred,
            component_count_gt=self.component_count_gt,
        )
        for k in sorted(self.tube_dice):
            d[f"tube_dice.{k}"] = self.tube_dice[k]
        if self.rng_algorithm:
            d['rng_algorithm'] = self.rng_algorithm
        return d

    def dumps(self) -> str:
        lines = []
        for k, v in self.as_dict().items():
            if isinstance(v, float):
                v = f"{v:.6f}"
            lines.append(f"{k} = {v}")
        return '\n'.join(lines) + '\n'

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)

    def save(self, path: str | Path):
        path = Path(path)
        if path.suffix == '.json':
            path.write_text(self.to_json(), encoding='utf-8')
        else:
            path.write_text(self.dumps(), encoding='utf-8')
