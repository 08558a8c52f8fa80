"""Whole-chain validation producing a findings report."""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import GENESIS_KINDS, Chain, link_hash, signature_problems, structural_problems


@dataclass(frozen=True)
class Finding:
    height: int
    code: str
    detail: str

    def __str__(self) -> str:
        return f"height {self.height}: [{self.code}] {self.detail}"


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def heights(self) -> set[int]:
        return {f.height for f in self.findings}

    def codes(self) -> set[str]:
        return {f.code for f in self.findings}

    def __str__(self) -> str:
        if self.ok:
            return "chain is well-formed"
        return "\n".join(str(f) for f in self.findings)


def validate_chain(chain: Chain) -> ValidationReport:
    """Check every chain invariant.

    Once a hash link breaks, every later block is reported as unanchored,
    because none of them can be traced back to the genesis any more.
    """
    report = ValidationReport()
    add = report.findings.append
    if not chain.blocks:
        add(Finding(0, "empty", "chain has no blocks"))
        return report
    first = chain.blocks[0]
    if first.kind not in GENESIS_KINDS:
        add(Finding(first.height, "malformed", "first block is not a genesis kind"))
    broken = False
    for pos, block in enumerate(chain.blocks):
        for problem in structural_problems(block):
            add(Finding(block.height, "malformed", problem))
        for problem in signature_problems(block):
            add(Finding(block.height, "signature", problem))
        if pos == 0:
            continue
        prev = chain.blocks[pos - 1]
        if block.kind in GENESIS_KINDS:
            add(Finding(block.height, "malformed", "genesis kind inside the chain"))
        if block.height != prev.height + 1:
            add(Finding(block.height, "height", f"height does not follow {prev.height}"))
        if block.prev_hash != link_hash(prev):
            add(Finding(block.height, "link", "prev_hash does not match predecessor"))
            broken = True
        elif broken:
            add(Finding(block.height, "unanchored", "descends from a broken link"))
    if chain.fixed_upto > chain.height + 1:
        add(Finding(chain.height, "marker", f"fixed_upto {chain.fixed_upto} beyond tip"))
    present = chain.tx_index
    for tx_id in sorted(chain.invalidated):
        if tx_id not in present:
            add(Finding(chain.height, "invalidated", f"unknown invalidated id {tx_id.hex()[:12]}"))
    return report
