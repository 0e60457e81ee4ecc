/**
 * Wire protocol types for the runner <-> worker stdio channel.
 *
 * One run command arrives as a single JSON line on stdin; the worker
 * answers with info/epoch events and exactly one terminal event, each as
 * its own JSON line on stdout.
 */

export interface StagePayload {
  section: string;
  type: string;
  class: string;
  path: string;
  key: string | null;
  params: Record<string, number | string | boolean | null>;
}

export interface PipelinePayload {
  hash: string;
  label: string;
  process: {
    lr: number;
    epochs: number;
    loss_function: string;
    data_scheme: string[];
    pipeline_scheme: string[];
    run_files_path: string;
  };
  stages: StagePayload[];
}

export interface RunCommand {
  cmd: 'run';
  pipeline: PipelinePayload;
  epochs: number;
  lr: number;
  loss_function: string;
  seed: number;
  resume_from: string | null;
  resource_token: string | null;
}

export type WorkerEvent =
  | { event: 'info'; stage: string; fields: Record<string, number | string | boolean | null> }
  | { event: 'epoch'; epoch: number; train_loss: number; test_loss: number }
  | { event: 'done'; checkpoint: string; curve: string }
  | { event: 'error'; message: string };

export function emit(event: WorkerEvent): void {
  process.stdout.write(JSON.stringify(event) + '\n');
}

export function parseRunCommand(line: string): RunCommand {
  let obj: unknown;
  try {
    obj = JSON.parse(line);
  } catch (err) {
    throw new Error(`not valid JSON: ${String(err)}`);
  }
  const cmd = obj as Partial<RunCommand>;
  if (cmd === null || typeof cmd !== 'object' || cmd.cmd !== 'run') {
    throw new Error("first message must be a {'cmd':'run'} object");
  }
  if (typeof cmd.epochs !== 'number' || cmd.epochs < 0 || !Number.isInteger(cmd.epochs)) {
    throw new Error('epochs must be a non-negative integer');
  }
  if (typeof cmd.lr !== 'number' || !Number.isFinite(cmd.lr)) {
    throw new Error('lr must be a finite number');
  }
  if (typeof cmd.seed !== 'number') {
    throw new Error('seed is required');
  }
  const pipeline = cmd.pipeline as PipelinePayload | undefined;
  if (!pipeline || !Array.isArray(pipeline.stages) || !pipeline.process) {
    throw new Error('pipeline with stages and process is required');
  }
  if (typeof pipeline.process.run_files_path !== 'string') {
    throw new Error('pipeline.process.run_files_path is required');
  }
  if (cmd.resume_from !== null && typeof cmd.resume_from !== 'string') {
    throw new Error('resume_from must be a path or null');
  }
  return cmd as RunCommand;
}
