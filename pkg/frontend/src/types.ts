export interface TopicWord {
  w: string;
  cos: number;
}

export interface Topic {
  id: number;
  words: TopicWord[];
}

export interface TopicsResponse {
  topics: Topic[];
}

export interface SessionNodeJson {
  id: string;
  parent: string | null;
  text: string;
  new_text: string;
  chosen_topics: number[];
  chosen_words: string[];
  options: unknown[];
}

export interface SessionJson {
  id: string;
  root_id: string;
  nodes: SessionNodeJson[];
}

export interface ExpandRequest {
  topic_ids: number[];
  words: string[];
  max_tokens?: number | null;
  seed?: number | null;
}

export interface ApiError {
  code: string;
  message: string;
  details: Record<string, unknown>;
}
