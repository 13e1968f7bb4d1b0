// SVG rendering of precomputed 2-D molecule depictions. The UI performs no
// chemistry: coordinates and bond orders come straight from the dataset.

import type { Depiction } from "./types.js";

const CPK: Record<string, string> = {
  C: "#222222",
  N: "#2060c8",
  O: "#c82020",
  S: "#b8a000",
  P: "#d07820",
  F: "#20a020",
  Cl: "#20a020",
  Br: "#a05020",
  I: "#70208a",
};

function escapeXml(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function depictionSvg(depiction: Depiction, size = 220): string {
  const atoms = depiction.atoms;
  if (atoms.length === 0) {
    return `<svg xmlns="http://www.w3.org/2000/svg" width="${size}" height="${size}"></svg>`;
  }
  const xs = atoms.map((a) => a.x);
  const ys = atoms.map((a) => a.y);
  const minX = Math.min(...xs);
  const maxX = Math.max(...xs);
  const minY = Math.min(...ys);
  const maxY = Math.max(...ys);
  const span = Math.max(maxX - minX, maxY - minY, 1e-6);
  const pad = 0.15 * span;
  const scale = size / (span + 2 * pad);
  const toX = (x: number) => (x - minX + pad) * scale;
  const toY = (y: number) => size - (y - minY + pad) * scale;

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${size}" height="${size}" viewBox="0 0 ${size} ${size}">`,
  );
  for (const bond of depiction.bonds) {
    const a = atoms[bond.a];
    const b = atoms[bond.b];
    const x1 = toX(a.x), y1 = toY(a.y), x2 = toX(b.x), y2 = toY(b.y);
    const dx = x2 - x1, dy = y2 - y1;
    const len = Math.hypot(dx, dy) || 1;
    const ox = (-dy / len) * 2.4;
    const oy = (dx / len) * 2.4;
    const stroke = `stroke="#444" stroke-width="1.4"`;
    if (bond.aromatic) {
      parts.push(`<line x1="${x1}" y1="${y1}" x2="${x2}" y2="${y2}" ${stroke}/>`);
      parts.push(
        `<line x1="${x1 + ox}" y1="${y1 + oy}" x2="${x2 + ox}" y2="${y2 + oy}" ${stroke} stroke-dasharray="3,3"/>`,
      );
    } else if (bond.order === 1) {
      parts.push(`<line x1="${x1}" y1="${y1}" x2="${x2}" y2="${y2}" ${stroke}/>`);
    } else if (bond.order === 2) {
      parts.push(`<line x1="${x1 - ox / 2}" y1="${y1 - oy / 2}" x2="${x2 - ox / 2}" y2="${y2 - oy / 2}" ${stroke}/>`);
      parts.push(`<line x1="${x1 + ox / 2}" y1="${y1 + oy / 2}" x2="${x2 + ox / 2}" y2="${y2 + oy / 2}" ${stroke}/>`);
    } else {
      parts.push(`<line x1="${x1}" y1="${y1}" x2="${x2}" y2="${y2}" ${stroke}/>`);
      parts.push(`<line x1="${x1 - ox}" y1="${y1 - oy}" x2="${x2 - ox}" y2="${y2 - oy}" ${stroke}/>`);
      parts.push(`<line x1="${x1 + ox}" y1="${y1 + oy}" x2="${x2 + ox}" y2="${y2 + oy}" ${stroke}/>`);
    }
  }
  atoms.forEach((atom, i) => {
    const x = toX(atom.x);
    const y = toY(atom.y);
    if (atom.symbol !== "C" || (atom.charge ?? 0) !== 0) {
      const color = CPK[atom.symbol] ?? "#333";
      const charge = atom.charge ? (atom.charge > 0 ? "+" : "−") : "";
      parts.push(`<circle cx="${x}" cy="${y}" r="8" fill="white"/>`);
      parts.push(
        `<text x="${x}" y="${y + 4}" font-size="11" font-family="sans-serif" ` +
          `text-anchor="middle" fill="${color}" data-atom="${i}">` +
          `${escapeXml(atom.symbol)}${charge}</text>`,
      );
    }
  });
  parts.push("</svg>");
  return parts.join("");
}
