import { z } from 'zod';

export const TASKS = [
  'retrieval',
  'classification',
  'pair_classification',
  'clustering',
  'reranking',
  'sts',
] as const;

export type Task = (typeof TASKS)[number];

const idValue = z.union([z.string(), z.number().int()]);
const labelValue = z.union([z.string(), z.number()]);

// Record shapes of the pipeline's on-disk schemas, one per task. Field
// order in SCHEMA_FIELDS is the canonical serialization order.
export const recordSchemas = {
  classification: z
    .object({ id: idValue, text: z.string(), label: labelValue })
    .strict(),
  clustering: z
    .object({
      id: idValue,
      sentences: z.array(z.string().min(1)).min(1),
      labels: z.array(labelValue),
    })
    .strict()
    .refine((r) => r.sentences.length === r.labels.length, {
      message: 'labels length differs from sentences',
    }),
  pair_classification: z
    .object({
      id: idValue,
      sentence1: z.string(),
      sentence2: z.string(),
      label: z.union([z.literal(0), z.literal(1)]),
    })
    .strict(),
  reranking: z
    .object({
      id: idValue,
      query: z.string().min(1),
      positive: z.array(z.string()).min(1),
      negative: z.array(z.string()),
    })
    .strict(),
  sts: z
    .object({
      id: idValue,
      sentence1: z.string(),
      sentence2: z.string(),
      score: z.number().min(0).max(5),
    })
    .strict(),
} as const;

export const corpusSchema = z
  .object({ _id: idValue, title: z.string(), text: z.string() })
  .strict();
export const querySchema = z.object({ _id: idValue, text: z.string() }).strict();

export const SCHEMA_FIELDS: Record<Exclude<Task, 'retrieval'>, string[]> = {
  classification: ['id', 'text', 'label'],
  clustering: ['id', 'sentences', 'labels'],
  pair_classification: ['id', 'sentence1', 'sentence2', 'label'],
  reranking: ['id', 'query', 'positive', 'negative'],
  sts: ['id', 'sentence1', 'sentence2', 'score'],
};

export const QRELS_HEADER = ['query-id', 'corpus-id', 'score'];

export const manifestSchema = z
  .object({
    dataset_id: z.string().min(1),
    task: z.enum(TASKS),
    source_lang: z.string().min(1),
    license: z.string(),
    splits: z.array(z.string().min(1)).min(1),
  })
  .strict();

export type Manifest = z.infer<typeof manifestSchema>;

/** Validate one mapped record against its task schema. */
export function validateRecord(
  task: Exclude<Task, 'retrieval'>,
  record: Record<string, unknown>,
  where: string,
): Record<string, unknown> {
  const result = recordSchemas[task].safeParse(record);
  if (!result.success) {
    const detail = result.error.issues
      .map((issue) => `${issue.path.join('.') || 'record'}: ${issue.message}`)
      .join('; ');
    throw new Error(`${where}: ${detail}`);
  }
  return result.data as Record<string, unknown>;
}
