from __future__ import annotations

from enum import Enum


class Variant(str, Enum):
    """Training configurations of the ablation grid."""

    ERM = "ERM"
    IB_ONLY = "IB_ONLY"  # w/o CAAN
    CAAN_ONLY = "CAAN_ONLY"  # w/o IB
    IB_DANN = "IB_DANN"
    IB_CAAN = "IB_CAAN"

    @property
    def stochastic(self) -> bool:
        return self in (Variant.IB_ONLY, Variant.IB_DANN, Variant.IB_CAAN)

    @property
    def uses_kl(self) -> bool:
        return self.stochastic

    @property
    def adversarial(self) -> bool:
        return self in (Variant.CAAN_ONLY, Variant.IB_DANN, Variant.IB_CAAN)

    @property
    def confidence_aware(self) -> bool:
        return self in (Variant.CAAN_ONLY, Variant.IB_CAAN)

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    Variant.IB_CAAN: "IB-CAAN",
    Variant.CAAN_ONLY: "w/o IB",
    Variant.IB_ONLY: "w/o CAAN",
    Variant.IB_DANN: "IB-DANN",
    Variant.ERM: "ERM",
}

# row order of the ablation table
TABLE_ORDER = (Variant.IB_CAAN, Variant.CAAN_ONLY, Variant.IB_ONLY, Variant.IB_DANN, Variant.ERM)
