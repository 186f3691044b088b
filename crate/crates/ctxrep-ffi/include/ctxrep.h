#ifndef CTXREP_H
#define CTXREP_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>


#define CTXREP_OK 0

// A required pointer argument was NULL.
#define CTXREP_ERR_NULL_ARGUMENT -1

// A string argument was not valid UTF-8.
#define CTXREP_ERR_UTF8 -2

// Validation failed (malformed context, permutation, or parameters).
#define CTXREP_ERR_INVALID -3

// The operation is defined but not available for these arguments (for
// example a canonical witness below k repetitions).
#define CTXREP_ERR_UNSUPPORTED -4

// Input could not be parsed (JSON or prompt text).
#define CTXREP_ERR_PARSE -5

// Opaque handle around an owned document sequence.
typedef struct CtxrepContext CtxrepContext;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy of the most recent error message on this thread, or NULL when the
// last call succeeded. Free with [`ctxrep_string_free`].
char *ctxrep_last_error_message(void);

// Release a string returned by this library.
//
// # Safety
// `s` must be a pointer previously returned by a `ctxrep_*` function and not
// yet freed; NULL is accepted and ignored.
void ctxrep_string_free(char *s);

// Parse a context from its JSON form
// `{"documents":[{"id","title","text","role","hop_index"}...]}`.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be a valid pointer.
int32_t ctxrep_context_from_json(const char *json, struct CtxrepContext **out);

// Serialize a context back to JSON. Order and text bytes round-trip.
//
// # Safety
// `ctx` must be a live handle; `out` must be a valid pointer.
int32_t ctxrep_context_to_json(const struct CtxrepContext *ctx, char **out);

// Release a context handle.
//
// # Safety
// `ctx` must come from this library and not be freed twice; NULL is ignored.
void ctxrep_context_free(struct CtxrepContext *ctx);

// Total number of documents, or -1 for a NULL handle.
//
// # Safety
// `ctx` must be NULL or a live handle.
int64_t ctxrep_context_len(const struct CtxrepContext *ctx);

// Number of distinct supporting documents, or -1 for a NULL handle.
//
// # Safety
// `ctx` must be NULL or a live handle.
int64_t ctxrep_context_k(const struct CtxrepContext *ctx);

// The repetition augmentation: concatenate the context with itself `k_hat`
// times into a fresh handle.
//
// # Safety
// `ctx` must be a live handle; `out` must be a valid pointer.
int32_t ctxrep_context_repeat(const struct CtxrepContext *ctx,
                              uint64_t k_hat,
                              struct CtxrepContext **out);

// True iff the `k_hat`-repeated context presents the supporting documents
// in every possible order (exhaustive over all k! orders; k is capped).
//
// # Safety
// `ctx` must be a live handle; `out` must be a valid pointer.
int32_t ctxrep_verify_order_coverage(const struct CtxrepContext *ctx, uint64_t k_hat, bool *out);

// True iff some increasing selection presents the supporting documents in
// the order given by `sigma` (1-based hop indices, length = k).
//
// # Safety
// `ctx` must be a live handle; `sigma` must point to `sigma_len` values;
// `out` must be a valid pointer.
int32_t ctxrep_is_in_order_set(const struct CtxrepContext *ctx,
                               const uint32_t *sigma,
                               size_t sigma_len,
                               bool *out);

// The canonical selection witness for `sigma` over the `k_hat`-repeated
// context, as JSON `{"positions":[...],"repetition_of":[...]}`. Requires
// `k_hat >= k`.
//
// # Safety
// `ctx` must be a live handle; `sigma` must point to `sigma_len` values;
// `out` must be a valid pointer.
int32_t ctxrep_extract_order_witness_json(const struct CtxrepContext *ctx,
                                          uint64_t k_hat,
                                          const uint32_t *sigma,
                                          size_t sigma_len,
                                          char **out);

// Generate a synthetic chained-list dataset as JSON Lines (header line with
// the parameters, then one sample per line).
//
// # Safety
// `out` must be a valid pointer.
int32_t ctxrep_generate_dataset_jsonl(uint64_t num_samples,
                                      uint64_t num_lists,
                                      uint64_t elements_per_list,
                                      uint64_t seed,
                                      char **out);

// Render the synthetic-task prompt for a sample (one JSON object as found
// in dataset lines) at the given repetition count. Output is a JSON array
// of `{"role","content"}` messages.
//
// # Safety
// `sample_json` must be a NUL-terminated string; `out` must be valid.
int32_t ctxrep_render_synthetic_prompt_json(const char *sample_json, uint64_t k_hat, char **out);

// Render the QA prompt for a question over a context handle.
// `style` is "verbatim", "reverse", or "shuffle:SEED". Output is a JSON
// array of `{"role","content"}` messages.
//
// # Safety
// Pointer arguments must be valid as in the other functions.
int32_t ctxrep_render_qa_prompt_json(const char *question,
                                     const struct CtxrepContext *ctx,
                                     uint64_t k_hat,
                                     const char *style,
                                     char **out);

// Run the deterministic mock chain reader on a JSON array of
// `{"role","content"}` messages and return its completion text
// ("Answer: ...").
//
// # Safety
// `messages_json` must be a NUL-terminated string; `out` must be valid.
int32_t ctxrep_mock_generate(const char *messages_json, char **out);

// Extract the answer span from a model output (the text after the last
// "Answer:", trimmed).
//
// # Safety
// `raw_output` must be a NUL-terminated string; `out` must be valid.
int32_t ctxrep_extract_answer(const char *raw_output, char **out);

// Short-answer normalization (lowercase, no punctuation, no articles,
// collapsed whitespace).
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be valid.
int32_t ctxrep_normalize_answer(const char *text, char **out);

// Bag-of-tokens F1 between a prediction and a gold answer.
//
// # Safety
// String arguments must be NUL-terminated; `out` must be valid.
int32_t ctxrep_token_f1(const char *prediction, const char *gold, double *out);

// True iff the first digit run in the extracted answer equals `gold`.
//
// # Safety
// `prediction` must be a NUL-terminated string; `out` must be valid.
int32_t ctxrep_exact_match_int(const char *prediction, uint32_t gold, bool *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CTXREP_H */
