#ifndef LEANET_H
#define LEANET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LeanetMode {
  /*
   Every region in reading order.
   */
  LEANET_MODE_READ_ALL = 0,
  /*
   The single region named by `region_id`.
   */
  LEANET_MODE_INTERACTIVE = 1,
} LeanetMode;

typedef enum LeanetStatus {
  LEANET_STATUS_OK = 0,
  LEANET_STATUS_NULL_ARGUMENT = 1,
  LEANET_STATUS_INVALID_ARGUMENT = 2,
  LEANET_STATUS_NOT_FOUND = 3,
  LEANET_STATUS_IO = 4,
  /*
   Malformed or invalid checkpoint, image or document.
   */
  LEANET_STATUS_PARSE = 5,
  LEANET_STATUS_INTERNAL = 6,
  /*
   A Rust panic was caught at the boundary.
   */
  LEANET_STATUS_PANIC = 7,
} LeanetStatus;

typedef struct LeanetDocument LeanetDocument;

/*
 A loaded network with its label set and stub recognisers.
 */
typedef struct LeanetModel LeanetModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. The pointer
 stays valid until the next call into this library on the same thread.
 */
const char *leanet_last_error(void);

/*
 Load a checkpoint. `labels_path` may be NULL, in which case `labels.txt`
 next to the checkpoint is read.

 # Safety
 String arguments must be NUL-terminated or NULL; `out` must be writable.
 */
enum LeanetStatus leanet_model_load(const char *checkpoint_path,
                                    const char *labels_path,
                                    struct LeanetModel **out);

/*
 Number of output classes, or 0 for NULL.

 # Safety
 `model` must be NULL or a live handle from [`leanet_model_load`].
 */
size_t leanet_model_num_classes(const struct LeanetModel *model);

/*
 # Safety
 `model` must be NULL or a handle from [`leanet_model_load`] not yet freed.
 */
void leanet_model_free(struct LeanetModel *model);

/*
 Segment an encoded image (PNG) held in memory and build its document.

 # Safety
 `data` must point to `len` readable bytes; `image_ref` must be
 NUL-terminated; `out` must be writable.
 */
enum LeanetStatus leanet_process_image(const struct LeanetModel *model,
                                       const uint8_t *data,
                                       size_t len,
                                       const char *image_ref,
                                       double threshold,
                                       struct LeanetDocument **out);

/*
 Segment an image file; the document's `image_ref` is the file name.

 # Safety
 `path` must be NUL-terminated; `out` must be writable.
 */
enum LeanetStatus leanet_process_file(const struct LeanetModel *model,
                                      const char *path,
                                      double threshold,
                                      struct LeanetDocument **out);

/*
 Parse and validate a document from its JSON form.

 # Safety
 `json` must be NUL-terminated; `out` must be writable.
 */
enum LeanetStatus leanet_document_parse(const char *json, struct LeanetDocument **out);

/*
 Canonical JSON of the document.

 # Safety
 `doc` must be a live handle; `out` must be writable.
 */
enum LeanetStatus leanet_document_to_json(const struct LeanetDocument *doc, char **out);

/*
 Number of regions, or 0 for NULL.

 # Safety
 `doc` must be NULL or a live handle.
 */
size_t leanet_document_region_count(const struct LeanetDocument *doc);

/*
 Spoken transcript, one line per utterance. `region_id` is read only in
 interactive mode.

 # Safety
 `doc` must be a live handle; `out` must be writable.
 */
enum LeanetStatus leanet_document_narrate(const struct LeanetDocument *doc,
                                          enum LeanetMode mode,
                                          uint32_t region_id,
                                          char **out);

/*
 Markup rendering of the document.

 # Safety
 `doc` must be a live handle; `out` must be writable.
 */
enum LeanetStatus leanet_document_markup(const struct LeanetDocument *doc, char **out);

/*
 # Safety
 `doc` must be NULL or a handle from this library not yet freed.
 */
void leanet_document_free(struct LeanetDocument *doc);

/*
 # Safety
 `s` must be NULL or a string returned by this library not yet freed.
 */
void leanet_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LEANET_H */
