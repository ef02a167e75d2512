/** Four-case review fixture with tiny hand-written artifacts. */

import type { FakeBundle } from "./fakeServer";

/** Plain-text PGM from row-major integer levels. */
export function pgmText(values: number[], width: number, height: number, maxval = 255): string {
  if (values.length !== width * height) {
    throw new Error("fixture raster does not match dimensions");
  }
  const rows: string[] = [];
  for (let y = 0; y < height; y++) {
    rows.push(values.slice(y * width, (y + 1) * width).join(" "));
  }
  return `P2\n${width} ${height}\n${maxval}\n${rows.join("\n")}\n`;
}

function ramp(seed: number): number[] {
  const out: number[] = [];
  for (let i = 0; i < 16; i++) {
    out.push((seed * 37 + i * 16) % 256);
  }
  return out;
}

function spot(index: number): number[] {
  const out = new Array<number>(16).fill(0);
  out[index] = 255;
  return out;
}

const DESCRIPTIVE =
  "feature,bin\n" +
  "Atelectasis,Low\n" +
  "Edema,Medium\n" +
  "Emphysema,High\n" +
  "Infiltration,Low\n";

export function fixtureBundles(): FakeBundle[] {
  return [
    {
      case_id: "case-001",
      image: pgmText(ramp(1), 4, 4),
      saliency: pgmText(spot(5), 4, 4),
      mask: pgmText(spot(5).map((v) => (v > 0 ? 255 : 0)), 4, 4),
      inductive: "COV+ because P(ASO) > 0.5",
      descriptive: DESCRIPTIVE,
      prediction: "COV+",
      truth: "COV+",
    },
    {
      case_id: "case-002",
      image: pgmText(ramp(2), 4, 4),
      saliency: pgmText(spot(9), 4, 4),
      mask: pgmText(spot(9), 4, 4),
      inductive: "COV- because P(ASO) <= 0.5",
      descriptive: DESCRIPTIVE,
      prediction: "COV-",
      truth: "COV+",
    },
    {
      case_id: "case-003",
      image: pgmText(ramp(3), 4, 4),
      saliency: pgmText(spot(0), 4, 4),
      mask: pgmText(spot(0), 4, 4),
      inductive: "COV+ because P(ASO) > 0.5",
      descriptive: DESCRIPTIVE,
      prediction: "COV+",
      truth: "COV-",
    },
    {
      case_id: "case-004",
      image: pgmText(ramp(4), 4, 4),
      saliency: pgmText(spot(15), 4, 4),
      mask: pgmText(spot(15), 4, 4),
      inductive: "COV- because P(ASO) <= 0.5",
      descriptive: DESCRIPTIVE,
      prediction: "COV-",
      truth: "COV-",
    },
  ];
}
