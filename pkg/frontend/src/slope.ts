/**
 * Ordinary least squares of log y on log x: the same estimator the Python
 * side uses, so annotated slopes agree with it to floating-point accuracy.
 */

export interface SlopeFit {
  slope: number;
  intercept: number;
  r2: number;
}

export function loglogSlope(xs: number[], ys: number[]): SlopeFit {
  if (xs.length !== ys.length || xs.length < 3) {
    throw new Error(`need at least 3 paired points, got ${xs.length}/${ys.length}`);
  }
  if (xs.some((v) => v <= 0) || ys.some((v) => v <= 0)) {
    throw new Error("log-log fit requires strictly positive data");
  }
  const lx = xs.map(Math.log);
  const ly = ys.map(Math.log);
  const mean = (a: number[]) => a.reduce((s, v) => s + v, 0) / a.length;
  const mx = mean(lx);
  const my = mean(ly);
  let sxx = 0;
  let sxy = 0;
  let syy = 0;
  for (let i = 0; i < lx.length; i++) {
    const dx = lx[i] - mx;
    const dy = ly[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx === 0) {
    throw new Error("x values must not be all equal");
  }
  const slope = sxy / sxx;
  const intercept = my - slope * mx;
  let sres = 0;
  for (let i = 0; i < lx.length; i++) {
    const r = ly[i] - (slope * lx[i] + intercept);
    sres += r * r;
  }
  const r2 = syy === 0 ? 1 : 1 - sres / syy;
  return { slope, intercept, r2 };
}
