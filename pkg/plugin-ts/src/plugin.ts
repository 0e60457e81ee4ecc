#!/usr/bin/env node
/**
 * External worker plugin for the gridrun runner.
 *
 * Reads one run command from stdin, trains a linear model with plain
 * gradient descent on the same synthetic regression task the built-in
 * trainer uses, and streams protocol events on stdout: one info event per
 * pipeline stage (the last model stage carries nb_params), one epoch event
 * per epoch with finite losses, then a single done event pointing at the
 * curve CSV and checkpoint JSON it wrote.  With resume_from set, training
 * continues from the checkpoint and epoch numbering carries on.
 */

import { createInterface } from 'node:readline';
import { mkdirSync, readFileSync, writeFileSync } from 'node:fs';
import { join } from 'node:path';

import { generate, paramsFromStage } from './data.js';
import { emit, parseRunCommand, RunCommand, StagePayload } from './protocol.js';
import { SplitMix64 } from './rng.js';
import {
  Checkpoint,
  initModel,
  epochStep,
  makeCheckpoint,
  mse,
  restoreCheckpoint,
} from './train.js';

const CURVE_HEADER = 'epoch,train_loss,test_loss';

function readCurveRows(path: string): string[] {
  const lines = readFileSync(path, 'utf-8').split('\n').filter((l) => l.trim());
  if (lines[0] !== CURVE_HEADER) {
    throw new Error(`curve file ${path} is missing its header`);
  }
  return lines.slice(1);
}

function run(cmd: RunCommand): void {
  const pipeline = cmd.pipeline;
  const datasetSeed = process.env.GRIDRUN_DATASET_SEED ?? cmd.seed;
  const runDir = pipeline.process.run_files_path;
  mkdirSync(runDir, { recursive: true });

  const dataTypes = new Set(pipeline.process.data_scheme);
  const modelTypes = new Set(pipeline.process.pipeline_scheme);
  const dataStages = pipeline.stages.filter((s) => dataTypes.has(s.type));
  const modelStages = pipeline.stages.filter((s) => modelTypes.has(s.type));

  const mergedDataParams: Record<string, unknown> = {};
  for (const stage of dataStages) {
    Object.assign(mergedDataParams, stage.params);
  }
  const dataParams = paramsFromStage(mergedDataParams);
  const ds = generate(dataParams, new SplitMix64(datasetSeed));

  let model;
  let rng: SplitMix64;
  let startEpoch: number;
  let curvePath: string;
  let checkpointPath: string;
  let rows: string[];

  if (cmd.resume_from) {
    const ckpt = JSON.parse(readFileSync(cmd.resume_from, 'utf-8')) as Checkpoint;
    ({ model, rng } = restoreCheckpoint(ckpt));
    startEpoch = ckpt.epoch;
    curvePath = ckpt.curve_path;
    checkpointPath = cmd.resume_from;
    rows = readCurveRows(curvePath);
  } else {
    rng = new SplitMix64(cmd.seed);
    model = initModel(ds.dIn, rng);
    startEpoch = 0;
    const base = `${pipeline.hash}_${BigInt(Math.floor(cmd.seed)).toString(16)}`;
    curvePath = join(runDir, `${base}.curve.csv`);
    checkpointPath = join(runDir, `${base}.ckpt.json`);
    rows = [];
  }

  const nbParams = ds.dIn + 1;
  for (const stage of pipeline.stages) {
    const fields: Record<string, number | string | boolean | null> = {
      ...(stage.params as Record<string, number | string | boolean | null>),
    };
    if (dataTypes.has(stage.type) && stage === dataStages[0]) {
      fields.input_shape = ds.dIn;
      fields.output_shape = 1;
      fields.data_size = dataParams.dataSize;
    }
    if (modelStages.length > 0 && stage === modelStages[modelStages.length - 1]) {
      fields.nb_params = nbParams;
      fields.class = stage.class;
    }
    emit({ event: 'info', stage: stage.section, fields });
  }

  for (let e = startEpoch + 1; e <= startEpoch + cmd.epochs; e++) {
    epochStep(model, ds, cmd.lr);
    const trainLoss = mse(model, ds.trainX, ds.trainY);
    const testLoss = mse(model, ds.testX, ds.testY);
    if (!Number.isFinite(trainLoss) || !Number.isFinite(testLoss)) {
      throw new Error('diverged');
    }
    emit({ event: 'epoch', epoch: e, train_loss: trainLoss, test_loss: testLoss });
    rows.push(`${e},${trainLoss},${testLoss}`);
  }

  writeFileSync(curvePath, [CURVE_HEADER, ...rows].join('\n') + '\n');
  const ckpt = makeCheckpoint(model, rng, startEpoch + cmd.epochs, curvePath);
  writeFileSync(checkpointPath, JSON.stringify(ckpt));
  emit({ event: 'done', checkpoint: checkpointPath, curve: curvePath });
}

async function main(): Promise<number> {
  const rl = createInterface({ input: process.stdin });
  let firstLine: string | null = null;
  for await (const line of rl) {
    firstLine = line;
    break;
  }
  rl.close();
  if (firstLine === null || !firstLine.trim()) {
    emit({ event: 'error', message: 'no run command on stdin' });
    return 1;
  }
  let cmd: RunCommand;
  try {
    cmd = parseRunCommand(firstLine);
  } catch (err) {
    emit({ event: 'error', message: `bad run command: ${(err as Error).message}` });
    return 1;
  }
  try {
    run(cmd);
  } catch (err) {
    const message = (err as Error).message ?? String(err);
    emit({ event: 'error', message: message === 'diverged' ? 'diverged' : message });
    return 1;
  }
  return 0;
}

main().then((code) => {
  process.exitCode = code;
});
