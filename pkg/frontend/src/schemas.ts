/**
 * Input schemas for the documented experiment-output files.
 * Every figure script validates its input against these before rendering;
 * a mismatch is a hard error and no output file is written.
 */
import { z } from "zod";

/** Row of a toy-sweep CSV table. */
export const SweepRow = z.object({
  sigma_true: z.number().finite(),
  sigma_est_or_lambda_or_beta: z.number().finite(),
  strategy: z.string().min(1),
  trial: z.number().int().nonnegative(),
  error: z.number().finite().nonnegative(),
});
export type SweepRow = z.infer<typeof SweepRow>;

export const SWEEP_COLUMNS = [
  "sigma_true",
  "sigma_est_or_lambda_or_beta",
  "strategy",
  "trial",
  "error",
] as const;

/** Row of a curation quality CSV (`index,Q`). */
export const QualityRow = z.object({
  index: z.number().int().nonnegative(),
  Q: z.number().finite(),
});
export type QualityRow = z.infer<typeof QualityRow>;

/** One half-step record of a refinement history JSON. */
export const HistoryRecord = z.object({
  kind: z.enum(["ML", "ME"]),
  pose_hash: z.string().min(1),
  z_reference: z.number().nullable(),
  seconds: z.number().nonnegative(),
});
export const History = z.array(HistoryRecord);
export type History = z.infer<typeof History>;

/** Pose record as written by the simulation/reconstruction commands. */
export const PoseRecord = z.object({
  index: z.number().int().nonnegative(),
  alpha: z.number().finite(),
  beta: z.number().finite(),
  gamma: z.number().finite(),
  dx: z.number().finite(),
  dy: z.number().finite(),
  ctf_id: z.number().int().nonnegative(),
});
export const Poses = z.array(PoseRecord).nonempty();
export type Poses = z.infer<typeof Poses>;
