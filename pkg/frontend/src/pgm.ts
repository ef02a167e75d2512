/**
 * Plain-text PGM decoding and pixel-buffer composition.
 *
 * The service ships images as base64-wrapped P2 text. Parsing and blending
 * are pure functions over typed arrays so they can be tested without a
 * painting canvas; `drawToCanvas` is the only DOM-touching step and degrades
 * to a no-op where no 2d context exists.
 */

export interface PgmImage {
  width: number;
  height: number;
  /** Row-major gray levels normalized to [0, 1]. */
  values: Float64Array;
}

export function parsePgm(text: string): PgmImage {
  const tokens: string[] = [];
  for (const line of text.split("\n")) {
    const meat = line.split("#", 1)[0] ?? "";
    for (const tok of meat.trim().split(/\s+/)) {
      if (tok.length > 0) tokens.push(tok);
    }
  }
  if (tokens[0] !== "P2") {
    throw new Error(`not a plain PGM: magic ${tokens[0] ?? "<empty>"}`);
  }
  if (tokens.length < 4) {
    throw new Error("truncated PGM header");
  }
  const width = Number.parseInt(tokens[1] ?? "", 10);
  const height = Number.parseInt(tokens[2] ?? "", 10);
  const maxval = Number.parseInt(tokens[3] ?? "", 10);
  if (!(width > 0) || !(height > 0) || !(maxval > 0)) {
    throw new Error(`bad PGM header ${tokens[1]} ${tokens[2]} ${tokens[3]}`);
  }
  const raster = tokens.slice(4);
  if (raster.length !== width * height) {
    throw new Error(`expected ${width * height} pixels, found ${raster.length}`);
  }
  const values = new Float64Array(width * height);
  for (let i = 0; i < raster.length; i++) {
    const v = Number.parseInt(raster[i] ?? "", 10);
    if (!Number.isInteger(v) || v < 0 || v > maxval) {
      throw new Error(`pixel ${i} out of range: ${raster[i]}`);
    }
    values[i] = v / maxval;
  }
  return { width, height, values };
}

export function decodePgm(b64: string): PgmImage {
  return parsePgm(atob(b64));
}

/** Opaque grayscale RGBA buffer for a parsed image. */
export function grayToRgba(image: PgmImage): Uint8ClampedArray {
  const out = new Uint8ClampedArray(image.width * image.height * 4);
  for (let i = 0; i < image.values.length; i++) {
    const level = Math.round((image.values[i] ?? 0) * 255);
    out[i * 4] = level;
    out[i * 4 + 1] = level;
    out[i * 4 + 2] = level;
    out[i * 4 + 3] = 255;
  }
  return out;
}

/**
 * Blend a heat layer over a grayscale base.
 *
 * Opacity in [0, 1] scales the contribution per pixel; the hottest pixels
 * push toward pure red while cold pixels leave the base untouched.
 */
export function overlayRgba(base: PgmImage, heat: PgmImage, opacity: number): Uint8ClampedArray {
  if (base.width !== heat.width || base.height !== heat.height) {
    throw new Error(
      `overlay size mismatch: ${base.width}x${base.height} vs ${heat.width}x${heat.height}`,
    );
  }
  const strength = Math.min(1, Math.max(0, opacity));
  const out = grayToRgba(base);
  for (let i = 0; i < heat.values.length; i++) {
    const a = strength * (heat.values[i] ?? 0);
    const gray = out[i * 4] ?? 0;
    out[i * 4] = Math.round(gray * (1 - a) + 255 * a);
    out[i * 4 + 1] = Math.round(gray * (1 - a));
    out[i * 4 + 2] = Math.round(gray * (1 - a));
  }
  return out;
}

// Test DOMs report no 2d context; remember that instead of failing per draw.
let contextAvailable: boolean | null = null;

function context2d(canvas: HTMLCanvasElement): CanvasRenderingContext2D | null {
  if (contextAvailable === false) return null;
  let ctx: CanvasRenderingContext2D | null = null;
  try {
    ctx = canvas.getContext("2d");
  } catch {
    ctx = null;
  }
  contextAvailable = ctx !== null;
  return ctx;
}

/**
 * Paint an RGBA buffer onto a canvas, scaled up with hard pixel edges.
 *
 * Returns false when the canvas cannot paint (headless DOM); the canvas
 * still receives its scaled dimensions so layout stays stable.
 */
export function drawToCanvas(
  canvas: HTMLCanvasElement,
  rgba: Uint8ClampedArray,
  width: number,
  height: number,
  scale = 8,
): boolean {
  canvas.width = width * scale;
  canvas.height = height * scale;
  const ctx = context2d(canvas);
  if (!ctx) return false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const i = (y * width + x) * 4;
      ctx.fillStyle = `rgb(${rgba[i]}, ${rgba[i + 1]}, ${rgba[i + 2]})`;
      ctx.fillRect(x * scale, y * scale, scale, scale);
    }
  }
  return true;
}
