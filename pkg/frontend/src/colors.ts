/** Diverging blue-white-red scale for bipolar importance overlays. */

const NEGATIVE = { r: 42, g: 80, b: 196 };
const NEUTRAL = { r: 255, g: 255, b: 255 };
const POSITIVE = { r: 205, g: 35, b: 38 };

export interface Rgb {
  r: number;
  g: number;
  b: number;
}

function mix(a: Rgb, b: Rgb, t: number): Rgb {
  return {
    r: Math.round(a.r + (b.r - a.r) * t),
    g: Math.round(a.g + (b.g - a.g) * t),
    b: Math.round(a.b + (b.b - a.b) * t),
  };
}

/** Map a value in [-1, 1] onto the diverging scale; 0 is neutral white. */
export function divergingColor(value: number): Rgb {
  const v = Math.max(-1, Math.min(1, value));
  if (v < 0) {
    return mix(NEUTRAL, NEGATIVE, -v);
  }
  return mix(NEUTRAL, POSITIVE, v);
}

export function toCss(color: Rgb, alpha = 1): string {
  if (alpha >= 1) {
    return `rgb(${color.r}, ${color.g}, ${color.b})`;
  }
  return `rgba(${color.r}, ${color.g}, ${color.b}, ${alpha})`;
}

/** Rescale a raw overlay value into [-1, 1] given its recorded scale. */
export function normalizeOverlayValue(value: number, min: number, max: number): number {
  const peak = Math.max(Math.abs(min), Math.abs(max));
  if (peak === 0) {
    return 0;
  }
  return Math.max(-1, Math.min(1, value / peak));
}
