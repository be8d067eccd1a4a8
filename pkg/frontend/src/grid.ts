/** Pure grid math shared by the viewer and its tests. */

export interface Cell {
  gx: number;
  gy: number;
}

/**
 * Map a pointer position inside the image element to a grid cell.
 * Cells are floor(x / (viewW / gridN)), clamped to [0, gridN - 1] so the
 * bottom/right edges stay inside the grid.
 */
export function pointerToCell(
  x: number,
  y: number,
  viewW: number,
  viewH: number,
  gridN: number,
): Cell {
  const clamp = (v: number) => Math.min(Math.max(v, 0), gridN - 1);
  const gx = clamp(Math.floor(x / (viewW / gridN)));
  const gy = clamp(Math.floor(y / (viewH / gridN)));
  return { gx, gy };
}

/**
 * Cells ordered by distance from the grid center (spiral-ish preload
 * order): users hover near the middle first, so those tiles load first.
 */
export function preloadOrder(gridN: number): Cell[] {
  const cells: Cell[] = [];
  for (let gy = 0; gy < gridN; gy++) {
    for (let gx = 0; gx < gridN; gx++) {
      cells.push({ gx, gy });
    }
  }
  const c = (gridN - 1) / 2;
  cells.sort((a, b) => {
    const da = (a.gx - c) ** 2 + (a.gy - c) ** 2;
    const db = (b.gx - c) ** 2 + (b.gy - c) ** 2;
    return da - db || a.gy - b.gy || a.gx - b.gx;
  });
  return cells;
}

export function cellKey(cell: Cell): string {
  return `${cell.gx},${cell.gy}`;
}
