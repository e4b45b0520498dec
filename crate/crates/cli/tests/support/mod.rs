pub mod reference_ppo;
