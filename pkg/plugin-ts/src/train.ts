/**
 * Linear model trained with plain full-batch gradient descent on MSE.
 *
 * The point of this plugin is the process boundary, not model quality:
 * weights are few, updates are exact, and the whole state (weights, bias,
 * RNG) serializes into a checkpoint for bit-exact resumes.
 */

import { Dataset } from './data.js';
import { SplitMix64 } from './rng.js';

export interface LinearModel {
  w: Float64Array;
  b: number;
}

export function initModel(dIn: number, rng: SplitMix64): LinearModel {
  const limit = Math.sqrt(6 / dIn);
  const w = new Float64Array(dIn);
  for (let j = 0; j < dIn; j++) {
    w[j] = rng.uniform(-limit, limit);
  }
  return { w, b: 0 };
}

export function predict(model: LinearModel, x: Float64Array): number {
  let out = model.b;
  for (let j = 0; j < x.length; j++) {
    out += model.w[j] * x[j];
  }
  return out;
}

export function mse(model: LinearModel, X: Float64Array[], Y: Float64Array): number {
  let sse = 0;
  for (let i = 0; i < X.length; i++) {
    const err = predict(model, X[i]) - Y[i];
    sse += err * err;
  }
  return X.length > 0 ? sse / X.length : 0;
}

/** One gradient-descent epoch over the full train split, in place. */
export function epochStep(model: LinearModel, ds: Dataset, lr: number): void {
  const n = ds.trainX.length;
  const gradW = new Float64Array(ds.dIn);
  let gradB = 0;
  for (let i = 0; i < n; i++) {
    const err = predict(model, ds.trainX[i]) - ds.trainY[i];
    for (let j = 0; j < ds.dIn; j++) {
      gradW[j] += (2 * err * ds.trainX[i][j]) / n;
    }
    gradB += (2 * err) / n;
  }
  for (let j = 0; j < ds.dIn; j++) {
    model.w[j] -= lr * gradW[j];
  }
  model.b -= lr * gradB;
}

// --- float64 <-> base64 (forced little-endian) ----------------------------

export function encodeF64(values: Float64Array): string {
  const buf = new ArrayBuffer(values.length * 8);
  const view = new DataView(buf);
  values.forEach((v, i) => view.setFloat64(i * 8, v, true));
  return Buffer.from(buf).toString('base64');
}

export function decodeF64(b64: string): Float64Array {
  const raw = Buffer.from(b64, 'base64');
  const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
  const out = new Float64Array(raw.byteLength / 8);
  for (let i = 0; i < out.length; i++) {
    out[i] = view.getFloat64(i * 8, true);
  }
  return out;
}

export interface Checkpoint {
  format: 'gridrun-ts-linear-v1';
  epoch: number;
  curve_path: string;
  model: { w: string; b: string };
  optimizer: Record<string, never>;
  rng: { state: string };
}

export function makeCheckpoint(
  model: LinearModel,
  rng: SplitMix64,
  epoch: number,
  curvePath: string,
): Checkpoint {
  return {
    format: 'gridrun-ts-linear-v1',
    epoch,
    curve_path: curvePath,
    model: { w: encodeF64(model.w), b: encodeF64(Float64Array.of(model.b)) },
    optimizer: {},
    rng: { state: rng.saveState() },
  };
}

export function restoreCheckpoint(ckpt: Checkpoint): { model: LinearModel; rng: SplitMix64 } {
  if (ckpt.format !== 'gridrun-ts-linear-v1') {
    throw new Error(`unsupported checkpoint format ${String(ckpt.format)}`);
  }
  return {
    model: { w: decodeF64(ckpt.model.w), b: decodeF64(ckpt.model.b)[0] },
    rng: SplitMix64.fromState(ckpt.rng.state),
  };
}
