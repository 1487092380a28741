export { BoundSession, openSession, type SessionOptions } from "./session.js";
export {
  CoreError,
  CoreIoError,
  CoreNumericalError,
  CoreValidationError,
  MissingInputError,
  SessionClosedError,
  UnknownImageError,
} from "./errors.js";
export type {
  DescriptionRecord,
  NegativeRecord,
  PredictionRecord,
  ScoresRecord,
  SpanRecord,
} from "./records.js";
