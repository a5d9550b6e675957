#pragma once

#include "scenerank/common.hpp"
#include "scenerank/dataset_io.hpp"
#include "scenerank/embedding_store.hpp"
#include "scenerank/evaluation.hpp"
#include "scenerank/random.hpp"
#include "scenerank/record.hpp"
#include "scenerank/reranker.hpp"
#include "scenerank/taxonomy.hpp"
#include "scenerank/trainer.hpp"
#include "scenerank/weight_matrix.hpp"
#include "scenerank/model.hpp"
