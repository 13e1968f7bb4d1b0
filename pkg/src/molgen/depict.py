"""2-D molecule depiction: ring polygons, breadth-first angular spreading,
and a few spring-relaxation sweeps. Recognizable rather than publication
grade; coordinates are exported for the explorer UI, which does no chemistry.
"""

from __future__ import annotations

import math

from .chem import Molecule

BOND_LENGTH = 1.0
SPRING_ITERATIONS = 20


def layout(mol: Molecule) -> dict:
    """Coordinates plus bond list: {"atoms": [...], "bonds": [...]}."""
    n = mol.num_atoms
    pos: list[tuple[float, float] | None] = [None] * n
    placed: set[int] = set()

    def place_ring(ring: list[int], anchor: int | None = None) -> None:
        size = len(ring)
        radius = BOND_LENGTH / (2 * math.sin(math.pi / size))
        if anchor is None or pos[anchor] is None:
            cx, cy = 0.0, 0.0
        else:
            cx, cy = pos[anchor]
            cx += radius
        start = ring.index(anchor) if anchor in ring else 0
        for offset in range(size):
            idx = ring[(start + offset) % size]
            if pos[idx] is None:
                angle = 2 * math.pi * offset / size + math.pi / 2
                pos[idx] = (cx + radius * math.cos(angle), cy + radius * math.sin(angle))
                placed.add(idx)

    # Seed each ring, fused rings near their shared atoms.
    for ring in mol.rings:
        anchor = next((i for i in ring if pos[i] is not None), None)
        place_ring(ring, anchor)

    # Breadth-first placement of everything else with angular spreading.
    order = sorted(range(n), key=lambda i: (pos[i] is None, i))
    queue = [i for i in order if pos[i] is not None]
    if not queue and n:
        pos[0] = (0.0, 0.0)
        placed.add(0)
        queue = [0]
    seen = set(queue)
    while queue:
        current = queue.pop(0)
        cx, cy = pos[current]
        unplaced = [j for j, _ in mol.neighbors(current) if pos[j] is None]
        n_new = len(unplaced)
        for slot, j in enumerate(sorted(unplaced)):
            angle = 2 * math.pi * (slot + 1) / (n_new + 1) + 0.7 * current
            pos[j] = (cx + BOND_LENGTH * math.cos(angle), cy + BOND_LENGTH * math.sin(angle))
            placed.add(j)
        for j, _ in mol.neighbors(current):
            if j not in seen:
                seen.add(j)
                queue.append(j)
        # disconnected fragments: restart elsewhere
        if not queue:
            rest = [i for i in range(n) if pos[i] is None]
            if rest:
                offset_x = max(p[0] for p in pos if p is not None) + 2.0
                pos[rest[0]] = (offset_x, 0.0)
                queue.append(rest[0])
                seen.add(rest[0])

    coords = [[x, y] for x, y in pos]  # type: ignore[misc]
    _relax(mol, coords)
    return {
        "atoms": [
            {
                "symbol": atom.element,
                "charge": atom.charge,
                "aromatic": atom.aromatic,
                "x": round(coords[i][0], 4),
                "y": round(coords[i][1], 4),
            }
            for i, atom in enumerate(mol.atoms)
        ],
        "bonds": [
            {"a": b.a, "b": b.b, "order": b.order, "aromatic": b.aromatic}
            for b in mol.bonds
        ],
    }


def _relax(mol: Molecule, coords: list[list[float]]) -> None:
    n = len(coords)
    ring_atoms = {i for ring in mol.rings for i in ring}
    for _ in range(SPRING_ITERATIONS):
        forces = [[0.0, 0.0] for _ in range(n)]
        for bond in mol.bonds:
            ax, ay = coords[bond.a]
            bx, by = coords[bond.b]
            dx, dy = bx - ax, by - ay
            dist = math.hypot(dx, dy) or 1e-6
            pull = 0.5 * (dist - BOND_LENGTH) / dist
            forces[bond.a][0] += pull * dx
            forces[bond.a][1] += pull * dy
            forces[bond.b][0] -= pull * dx
            forces[bond.b][1] -= pull * dy
        for i in range(n):
            for j in range(i + 1, n):
                dx = coords[j][0] - coords[i][0]
                dy = coords[j][1] - coords[i][1]
                d2 = dx * dx + dy * dy
                if d2 < 1.0 and d2 > 1e-12:
                    push = 0.15 * (1.0 - math.sqrt(d2)) / math.sqrt(d2)
                    forces[i][0] -= push * dx
                    forces[i][1] -= push * dy
                    forces[j][0] += push * dx
                    forces[j][1] += push * dy
        for i in range(n):
            # ring atoms move less so polygons stay put
            scale = 0.3 if i in ring_atoms else 1.0
            coords[i][0] += scale * forces[i][0]
            coords[i][1] += scale * forces[i][1]
