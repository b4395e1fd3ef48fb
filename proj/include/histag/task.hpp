#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "histag/corpus.hpp"

namespace histag {

/// One independently trained prediction task.
enum class TaskId { LEMMA, POS, CAS, DEGRE, GENRE, MODE, NOMB, PERS, TEMPS };

inline constexpr std::array<TaskId, 9> kAllTasks = {
    TaskId::LEMMA, TaskId::POS,  TaskId::CAS,  TaskId::DEGRE, TaskId::GENRE,
    TaskId::MODE,  TaskId::NOMB, TaskId::PERS, TaskId::TEMPS};

std::string_view task_name(TaskId task);
/// Case-insensitive; throws ConfigError on unknown names.
TaskId parse_task(std::string_view name);
bool is_morph_task(TaskId task);

/// Gold value of `task` for one token. Morph tasks read the token's slot of
/// split_morph; unparseable morph yields "_".
std::string task_label(TaskId task, const AnnotatedToken& token);

/// task_label over every token of the sentences, in order.
std::vector<std::string> task_column(const std::vector<Sentence>& sentences, TaskId task);

}  // namespace histag
