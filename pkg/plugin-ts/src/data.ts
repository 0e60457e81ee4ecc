/**
 * Synthetic regression task shared with the host framework: inputs uniform
 * in [-1, 1]^dIn, target = feature-mean of sin(pi * x) plus Gaussian noise.
 */

import { SplitMix64 } from './rng.js';

export interface Dataset {
  trainX: Float64Array[];
  trainY: Float64Array;
  testX: Float64Array[];
  testY: Float64Array;
  dIn: number;
}

export interface DataParams {
  dataSize: number;
  trainProp: number;
  dIn: number;
  noiseSigma: number;
}

export function paramsFromStage(params: Record<string, unknown>): DataParams {
  const num = (name: string, fallback: number): number => {
    const v = params[name];
    return typeof v === 'number' && Number.isFinite(v) ? v : fallback;
  };
  return {
    dataSize: Math.max(2, Math.trunc(num('data_size', 1000))),
    trainProp: Math.min(0.99, Math.max(0.01, num('train_prop', 0.9))),
    dIn: Math.max(1, Math.trunc(num('d_in', 8))),
    noiseSigma: Math.max(0, num('noise_sigma', 0.1)),
  };
}

export function generate(p: DataParams, rng: SplitMix64): Dataset {
  const X: Float64Array[] = [];
  const Y = new Float64Array(p.dataSize);
  for (let i = 0; i < p.dataSize; i++) {
    const row = new Float64Array(p.dIn);
    let target = 0;
    for (let j = 0; j < p.dIn; j++) {
      row[j] = rng.uniform(-1, 1);
      target += Math.sin(Math.PI * row[j]);
    }
    X.push(row);
    Y[i] = target / p.dIn + (p.noiseSigma > 0 ? p.noiseSigma * rng.normal() : 0);
  }
  const nTrain = Math.floor(p.trainProp * p.dataSize);
  return {
    trainX: X.slice(0, nTrain),
    trainY: Y.subarray(0, nTrain),
    testX: X.slice(nTrain),
    testY: Y.subarray(nTrain),
    dIn: p.dIn,
  };
}
